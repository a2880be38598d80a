#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "drender/autodiff.h"
#include "drender/splat.h"

// Losses, regularizers, and the optimizers driving inverse rendering:
// gradient descent and Adam on reverse-mode gradients, Levenberg-Marquardt on
// forward-mode Jacobians for small parameter vectors.

namespace drender {

template <class T>
T loss_l2(const Image4<T>& rendered, const Image4<double>& target) {
    if (rendered.width != target.width || rendered.height != target.height)
        throw std::invalid_argument("image shapes differ");
    T sum = T(0.0);
    for (size_t i = 0; i < rendered.pixels.size(); i++) {
        Vec4<T> d = rendered.pixels[i] - to_vec4<T>(target.pixels[i]);
        sum = sum + d.x * d.x + d.y * d.y + d.z * d.z + d.w * d.w;
    }
    return sum * (1.0 / (4.0 * rendered.pixels.size()));
}

template <class T>
T loss_l1(const Image4<T>& rendered, const Image4<double>& target) {
    using std::abs;
    if (rendered.width != target.width || rendered.height != target.height)
        throw std::invalid_argument("image shapes differ");
    T sum = T(0.0);
    for (size_t i = 0; i < rendered.pixels.size(); i++) {
        Vec4<T> d = rendered.pixels[i] - to_vec4<T>(target.pixels[i]);
        sum = sum + abs(d.x) + abs(d.y) + abs(d.z) + abs(d.w);
    }
    return sum * (1.0 / (4.0 * rendered.pixels.size()));
}

// mean squared norm of the uniform Laplacian (vertex minus 1-ring average);
// positions may override the mesh's own; isolated vertices contribute zero
template <class T>
T regularize_laplacian(const TriangleMesh& mesh, std::span<const Vec3<T>> positions) {
    std::vector<std::vector<int>> ring(mesh.positions.size());
    auto link = [&](int a, int b) {
        auto& r = ring[a];
        if (std::find(r.begin(), r.end(), b) == r.end()) r.push_back(b);
    };
    for (const Vec3i& t : mesh.triangles) {
        link(t.x, t.y), link(t.y, t.x);
        link(t.y, t.z), link(t.z, t.y);
        link(t.z, t.x), link(t.x, t.z);
    }
    auto vpos = [&](int i) {
        return positions.empty() ? to_vec3<T>(mesh.positions[i]) : positions[i];
    };
    T sum = T(0.0);
    for (size_t v = 0; v < ring.size(); v++) {
        if (ring[v].empty()) continue;
        Vec3<T> mean{T(0.0), T(0.0), T(0.0)};
        for (int nb : ring[v]) mean += vpos(nb);
        Vec3<T> lap = vpos(int(v)) - mean * (1.0 / ring[v].size());
        sum = sum + dot(lap, lap);
    }
    return sum * (1.0 / double(ring.size()));
}

// ---------------------------------------------------------------------------
// first-order steps

struct AdamState {
    std::vector<double> m, v;
    int t = 0;
};

inline void step_adam(std::span<double> params, std::span<const double> grad,
                      AdamState& state, double lr, double beta1 = 0.9,
                      double beta2 = 0.999, double eps = 1e-8) {
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    state.t++;
    double c1 = 1.0 - std::pow(beta1, state.t);
    double c2 = 1.0 - std::pow(beta2, state.t);
    for (size_t i = 0; i < params.size(); i++) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + eps);
    }
}

inline void step_gd(std::span<double> params, std::span<const double> grad, double lr) {
    for (size_t i = 0; i < params.size(); i++) params[i] -= lr * grad[i];
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

// solves A x = b for symmetric positive-definite A (row-major, destroyed);
// solution replaces b; returns false on a non-positive pivot
inline bool solve_cholesky(std::span<double> a, std::span<double> b, int n) {
    for (int j = 0; j < n; j++) {
        for (int i = j; i < n; i++) {
            double s = a[size_t(i) * n + j];
            for (int k = 0; k < j; k++) s -= a[size_t(i) * n + k] * a[size_t(j) * n + k];
            if (i == j) {
                if (s <= 0.0) return false;
                a[size_t(j) * n + j] = std::sqrt(s);
            } else {
                a[size_t(i) * n + j] = s / a[size_t(j) * n + j];
            }
        }
    }
    for (int i = 0; i < n; i++) {  // L y = b
        double s = b[i];
        for (int k = 0; k < i; k++) s -= a[size_t(i) * n + k] * b[k];
        b[i] = s / a[size_t(i) * n + i];
    }
    for (int i = n - 1; i >= 0; i--) {  // L^T x = y
        double s = b[i];
        for (int k = i + 1; k < n; k++) s -= a[size_t(k) * n + i] * b[k];
        b[i] = s / a[size_t(i) * n + i];
    }
    return true;
}

struct LMState {
    double lambda = 1e-3;
    double loss = 0;                // sum of squared residuals at params
    Jacobian jacobian;              // at the params of the last evaluation
    std::vector<double> residuals;
};

inline constexpr double kLmLambdaMax = 1e10;

// one damped Gauss-Newton step on (J^T J + lambda diag(J^T J)) d = -J^T r.
// f must be callable with span<const Dual> -> vector<Dual> (for the Jacobian)
// and span<const double> -> vector<double>. Accepted steps halve lambda,
// rejected ones quadruple it and retry until the cap; returns whether a step
// was taken. Normal equations that stay singular at the cap abort.
template <class F>
bool step_lm(const F& f, std::span<double> params, LMState& state) {
    int n = int(params.size());
    state.residuals = f(std::span<const double>(params));
    int m = int(state.residuals.size());
    double sse = 0;
    for (double r : state.residuals) sse += r * r;
    state.loss = sse;
    state.jacobian = jacobian_forward(
        [&](std::span<const Dual> xs) { return f(xs); }, params);
    const Jacobian& jac = state.jacobian;

    std::vector<double> jtj(size_t(n) * n, 0.0), jtr(n, 0.0);
    for (int r = 0; r < m; r++)
        for (int i = 0; i < n; i++) {
            jtr[i] += jac(r, i) * state.residuals[r];
            for (int j = 0; j <= i; j++) jtj[size_t(i) * n + j] += jac(r, i) * jac(r, j);
        }
    for (int i = 0; i < n; i++)
        for (int j = i + 1; j < n; j++) jtj[size_t(i) * n + j] = jtj[size_t(j) * n + i];

    std::vector<double> a(size_t(n) * n), delta(n), cand(params.begin(), params.end());
    while (true) {
        a = jtj;
        for (int i = 0; i < n; i++)
            a[size_t(i) * n + i] += state.lambda * jtj[size_t(i) * n + i];
        for (int i = 0; i < n; i++) delta[i] = -jtr[i];
        if (!solve_cholesky(a, delta, n)) {
            state.lambda *= 4.0;
            if (state.lambda > kLmLambdaMax)
                throw std::runtime_error("LM normal equations singular at damping cap");
            continue;
        }
        for (int i = 0; i < n; i++) cand[i] = params[i] + delta[i];
        std::vector<double> rc = f(std::span<const double>(cand));
        double sse_c = 0;
        for (double r : rc) sse_c += r * r;
        if (sse_c < sse) {
            std::copy(cand.begin(), cand.end(), params.begin());
            state.lambda = std::max(state.lambda * 0.5, 1e-12);
            state.loss = sse_c;
            state.residuals = std::move(rc);
            return true;
        }
        state.lambda *= 4.0;
        if (state.lambda > kLmLambdaMax) return false;
    }
}

// ---------------------------------------------------------------------------
// bookkeeping

struct LossRecord {
    int iteration = 0;
    double loss = 0;
    uint64_t param_hash = 0;
    double wall_ms = 0;
};

// FNV-1a over the raw parameter bytes, for cheap snapshot identity
inline uint64_t hash_params(std::span<const double> params) {
    uint64_t h = 1469598103934665603ull;
    for (double p : params) {
        uint64_t bits;
        std::memcpy(&bits, &p, sizeof bits);
        for (int i = 0; i < 8; i++) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 1099511628211ull;
        }
    }
    return h;
}

}  // namespace drender
