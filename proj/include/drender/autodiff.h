#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "drender/vec.h"

// Automatic differentiation over the primitives the render pipeline needs:
// arithmetic, exp, sqrt, sin/cos, abs, max/min (branch-selected derivative,
// ties toward the first argument) and floor (treated as locally constant).
//
// Two modes share the same primitive set:
//   Dual — forward mode with a runtime derivative width (n <= 16), used for
//          small-parameter Jacobians (pose, profile radii).
//   Rev  — reverse mode over a tape, used for pixel losses with many inputs.

namespace drender {

inline constexpr int kMaxDualWidth = 16;

struct EvalDomainError : std::runtime_error {
    int64_t node = -1;
    explicit EvalDomainError(const std::string& msg, int64_t node_ = -1)
        : std::runtime_error(msg), node(node_) {}
};

// ---------------------------------------------------------------------------
// forward mode

struct Dual {
    double v = 0;
    int n = 0;  // active derivative lanes; constants have n == 0
    std::array<double, kMaxDualWidth> d{};

    Dual() = default;
    Dual(double value) : v(value) {}  // NOLINT: implicit constant lift
    static Dual seeded(double value, int lane, int width) {
        Dual r(value);
        r.n = width;
        r.d[lane] = 1.0;
        return r;
    }
};

inline double value(const Dual& x) { return x.v; }

namespace detail {
inline int lanes(const Dual& a, const Dual& b) { return a.n > b.n ? a.n : b.n; }
}  // namespace detail

inline Dual operator+(const Dual& a, const Dual& b) {
    Dual r(a.v + b.v);
    r.n = detail::lanes(a, b);
    for (int i = 0; i < r.n; i++) r.d[i] = a.d[i] + b.d[i];
    return r;
}
inline Dual operator-(const Dual& a, const Dual& b) {
    Dual r(a.v - b.v);
    r.n = detail::lanes(a, b);
    for (int i = 0; i < r.n; i++) r.d[i] = a.d[i] - b.d[i];
    return r;
}
inline Dual operator-(const Dual& a) {
    Dual r(-a.v);
    r.n = a.n;
    for (int i = 0; i < r.n; i++) r.d[i] = -a.d[i];
    return r;
}
inline Dual operator*(const Dual& a, const Dual& b) {
    Dual r(a.v * b.v);
    r.n = detail::lanes(a, b);
    for (int i = 0; i < r.n; i++) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
}
inline Dual operator/(const Dual& a, const Dual& b) {
    Dual r(a.v / b.v);
    double inv = 1.0 / b.v;
    r.n = detail::lanes(a, b);
    for (int i = 0; i < r.n; i++) r.d[i] = (a.d[i] - r.v * b.d[i]) * inv;
    return r;
}
inline Dual& operator+=(Dual& a, const Dual& b) { return a = a + b; }
inline Dual& operator-=(Dual& a, const Dual& b) { return a = a - b; }
inline Dual& operator*=(Dual& a, const Dual& b) { return a = a * b; }

inline bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
inline bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
inline bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
inline bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }

inline Dual exp(const Dual& a) {
    double e = std::exp(a.v);
    Dual r(e);
    r.n = a.n;
    for (int i = 0; i < r.n; i++) r.d[i] = e * a.d[i];
    return r;
}
inline Dual sqrt(const Dual& a) {
    double s = std::sqrt(a.v);
    Dual r(s);
    r.n = a.n;
    double g = 0.5 / s;
    for (int i = 0; i < r.n; i++) r.d[i] = g * a.d[i];
    return r;
}
inline Dual sin(const Dual& a) {
    Dual r(std::sin(a.v));
    r.n = a.n;
    double c = std::cos(a.v);
    for (int i = 0; i < r.n; i++) r.d[i] = c * a.d[i];
    return r;
}
inline Dual cos(const Dual& a) {
    Dual r(std::cos(a.v));
    r.n = a.n;
    double s = -std::sin(a.v);
    for (int i = 0; i < r.n; i++) r.d[i] = s * a.d[i];
    return r;
}
// subgradient at 0 is 0 (needed by the L1 loss)
inline Dual abs(const Dual& a) {
    if (a.v > 0) return a;
    if (a.v < 0) return -a;
    return Dual(0.0);
}
// pixel-grid selection: piecewise constant, zero derivative
inline Dual floor(const Dual& a) { return Dual(std::floor(a.v)); }
// branch selection by value; ties keep the first argument
inline Dual max(const Dual& a, const Dual& b) { return b.v > a.v ? b : a; }
inline Dual min(const Dual& a, const Dual& b) { return b.v < a.v ? b : a; }

// ---------------------------------------------------------------------------
// reverse mode

class Tape;

struct Rev {
    double v = 0;
    int32_t idx = -1;  // -1 marks a constant
    Tape* tape = nullptr;

    Rev() = default;
    Rev(double value) : v(value) {}  // NOLINT: implicit constant lift
};

inline double value(const Rev& x) { return x.v; }

class Tape {
  public:
    struct Node {
        int32_t p0 = -1, p1 = -1;
        double d0 = 0, d1 = 0;
    };

    Rev var(double v) {
        Rev r(v);
        r.idx = record(v, -1, 0, -1, 0);
        r.tape = this;
        return r;
    }

    int32_t record(double v, int32_t p0, double d0, int32_t p1, double d1) {
        if (!std::isfinite(v) && first_nonfinite_ < 0)
            first_nonfinite_ = static_cast<int64_t>(nodes_.size());
        nodes_.push_back({p0, p1, d0, d1});
        return static_cast<int32_t>(nodes_.size() - 1);
    }

    // one reverse sweep from the output node; returns adjoints for all nodes
    std::vector<double> backward(int32_t output) const {
        std::vector<double> adj(nodes_.size(), 0.0);
        if (output < 0) return adj;
        adj[output] = 1.0;
        for (int32_t i = output; i >= 0; i--) {
            double a = adj[i];
            if (a == 0) continue;
            const Node& n = nodes_[i];
            if (n.p0 >= 0) adj[n.p0] += a * n.d0;
            if (n.p1 >= 0) adj[n.p1] += a * n.d1;
        }
        return adj;
    }

    void clear() {
        nodes_.clear();
        first_nonfinite_ = -1;
    }
    size_t size() const { return nodes_.size(); }
    int64_t first_nonfinite() const { return first_nonfinite_; }
    void reserve(size_t n) { nodes_.reserve(n); }

  private:
    std::vector<Node> nodes_;
    int64_t first_nonfinite_ = -1;
};

namespace detail {
inline Tape* tape_of(const Rev& a, const Rev& b) { return a.tape ? a.tape : b.tape; }

inline Rev unary(const Rev& a, double v, double da) {
    Rev r(v);
    if (a.tape) {
        r.tape = a.tape;
        r.idx = a.tape->record(v, a.idx, da, -1, 0);
    }
    return r;
}
inline Rev binary(const Rev& a, const Rev& b, double v, double da, double db) {
    Rev r(v);
    Tape* t = tape_of(a, b);
    if (t) {
        r.tape = t;
        r.idx = t->record(v, a.idx, da, b.idx, db);
    }
    return r;
}
}  // namespace detail

inline Rev operator+(const Rev& a, const Rev& b) { return detail::binary(a, b, a.v + b.v, 1, 1); }
inline Rev operator-(const Rev& a, const Rev& b) { return detail::binary(a, b, a.v - b.v, 1, -1); }
inline Rev operator-(const Rev& a) { return detail::unary(a, -a.v, -1); }
inline Rev operator*(const Rev& a, const Rev& b) {
    return detail::binary(a, b, a.v * b.v, b.v, a.v);
}
inline Rev operator/(const Rev& a, const Rev& b) {
    double inv = 1.0 / b.v;
    return detail::binary(a, b, a.v * inv, inv, -a.v * inv * inv);
}
inline Rev& operator+=(Rev& a, const Rev& b) { return a = a + b; }
inline Rev& operator-=(Rev& a, const Rev& b) { return a = a - b; }
inline Rev& operator*=(Rev& a, const Rev& b) { return a = a * b; }

inline bool operator<(const Rev& a, const Rev& b) { return a.v < b.v; }
inline bool operator>(const Rev& a, const Rev& b) { return a.v > b.v; }
inline bool operator<=(const Rev& a, const Rev& b) { return a.v <= b.v; }
inline bool operator>=(const Rev& a, const Rev& b) { return a.v >= b.v; }

inline Rev exp(const Rev& a) {
    double e = std::exp(a.v);
    return detail::unary(a, e, e);
}
inline Rev sqrt(const Rev& a) {
    double s = std::sqrt(a.v);
    return detail::unary(a, s, 0.5 / s);
}
inline Rev sin(const Rev& a) { return detail::unary(a, std::sin(a.v), std::cos(a.v)); }
inline Rev cos(const Rev& a) { return detail::unary(a, std::cos(a.v), -std::sin(a.v)); }
inline Rev abs(const Rev& a) {
    if (a.v > 0) return a;
    if (a.v < 0) return -a;
    return detail::unary(a, 0.0, 0.0);
}
inline Rev floor(const Rev& a) { return Rev(std::floor(a.v)); }
inline Rev max(const Rev& a, const Rev& b) { return b.v > a.v ? b : a; }
inline Rev min(const Rev& a, const Rev& b) { return b.v < a.v ? b : a; }

// ---------------------------------------------------------------------------
// drivers

// Gradient of a scalar function via one reverse sweep.
inline std::vector<double> grad(const std::function<Rev(std::span<const Rev>)>& f,
                                std::span<const double> x) {
    Tape tape;
    std::vector<Rev> xs(x.size());
    for (size_t i = 0; i < x.size(); i++) xs[i] = tape.var(x[i]);
    Rev y = f(xs);
    if (!std::isfinite(y.v) || tape.first_nonfinite() >= 0) {
        throw EvalDomainError("non-finite value during gradient evaluation at node " +
                                  std::to_string(tape.first_nonfinite()),
                              tape.first_nonfinite());
    }
    std::vector<double> adj = tape.backward(y.idx);
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); i++) g[i] = xs[i].idx >= 0 ? adj[xs[i].idx] : 0.0;
    return g;
}

struct Jacobian {
    int rows = 0, cols = 0;
    std::vector<double> data;  // row-major
    double operator()(int r, int c) const { return data[r * cols + c]; }
};

// Full Jacobian by seeding one dual lane per input; intended for small n.
inline Jacobian jacobian_forward(
    const std::function<std::vector<Dual>(std::span<const Dual>)>& f,
    std::span<const double> x) {
    int n = static_cast<int>(x.size());
    if (n > kMaxDualWidth)
        throw std::invalid_argument("jacobian_forward supports at most " +
                                    std::to_string(kMaxDualWidth) + " inputs");
    std::vector<Dual> xs(n);
    for (int i = 0; i < n; i++) xs[i] = Dual::seeded(x[i], i, n);
    std::vector<Dual> ys = f(xs);
    Jacobian j;
    j.rows = static_cast<int>(ys.size());
    j.cols = n;
    j.data.resize(static_cast<size_t>(j.rows) * n);
    for (int r = 0; r < j.rows; r++) {
        if (!std::isfinite(ys[r].v))
            throw EvalDomainError("non-finite output " + std::to_string(r) +
                                  " in jacobian_forward");
        for (int c = 0; c < n; c++) j.data[static_cast<size_t>(r) * n + c] = ys[r].d[c];
    }
    return j;
}

// Compares the reverse-mode gradient against central differences.
// f must be callable with both std::span<const Rev> and std::span<const double>.
// Returns the worst componentwise error |g - fd| / max(floor, |g|, |fd|).
template <class F>
double check_gradient(F&& f, std::span<const double> x, double h, double floor_ = 1e-6) {
    std::vector<double> g =
        grad([&](std::span<const Rev> xs) { return f(xs); }, x);
    std::vector<double> xp(x.begin(), x.end());
    double worst = 0;
    for (size_t i = 0; i < x.size(); i++) {
        double x0 = xp[i];
        xp[i] = x0 + h;
        double fp = f(std::span<const double>(xp));
        xp[i] = x0 - h;
        double fm = f(std::span<const double>(xp));
        xp[i] = x0;
        double fd = (fp - fm) / (2 * h);
        double denom = std::max({floor_, std::fabs(g[i]), std::fabs(fd)});
        worst = std::max(worst, std::fabs(g[i] - fd) / denom);
    }
    return worst;
}

}  // namespace drender
