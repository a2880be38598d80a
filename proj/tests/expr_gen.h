#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "drender/autodiff.h"

// Random expression trees over the supported autodiff primitives, used to
// cross-check forward mode, reverse mode and central differences on the same
// function. Sample points are rejection-sampled so the finite-difference
// comparison is well conditioned: away from max/min/abs kinks and floor
// steps, denominators and sqrt arguments bounded away from zero, values
// bounded, and every input carrying a non-negligible gradient.

namespace exprgen {

enum class Op {
    input,
    constant,
    add,
    sub,
    mul,
    div,
    exp,
    sqrt,
    sin,
    cos,
    abs,
    neg,
    floor,
    max,
    min,
};

struct Node {
    Op op;
    int a = -1, b = -1;  // child indices
    double c = 0;        // constant payload / input slot
};

struct Expr {
    std::vector<Node> nodes;  // topological order, last node is the root
    int n_inputs = 0;
};

// margins used when deciding whether a sample point is safe for FD checks
struct Hazard {
    double min_abs_gap = 1e9;    // |arg| of abs, |a-b| of max/min
    double min_step_gap = 1e9;   // distance of floor arg to nearest integer
    double min_denom = 1e9;      // |denominator|
    double min_sqrt_arg = 1e9;   // sqrt argument
    double max_exp_arg = -1e9;   // exp argument
    double max_value = 0;        // largest |node value|
    bool ok() const {
        return min_abs_gap > 1e-2 && min_step_gap > 1e-2 && min_denom > 0.5 &&
               min_sqrt_arg > 0.5 && max_exp_arg < 3.0 && max_value < 20.0;
    }
};

template <class T>
std::vector<T> eval_nodes(const Expr& e, std::span<const T> x) {
    using std::abs;
    using std::cos;
    using std::exp;
    using std::floor;
    using std::max;
    using std::min;
    using std::sin;
    using std::sqrt;
    std::vector<T> v(e.nodes.size());
    for (size_t i = 0; i < e.nodes.size(); i++) {
        const Node& n = e.nodes[i];
        switch (n.op) {
            case Op::input: v[i] = x[static_cast<size_t>(n.c)]; break;
            case Op::constant: v[i] = T(n.c); break;
            case Op::add: v[i] = v[n.a] + v[n.b]; break;
            case Op::sub: v[i] = v[n.a] - v[n.b]; break;
            case Op::mul: v[i] = v[n.a] * v[n.b]; break;
            case Op::div: v[i] = v[n.a] / v[n.b]; break;
            case Op::exp: v[i] = exp(v[n.a]); break;
            case Op::sqrt: v[i] = sqrt(v[n.a]); break;
            case Op::sin: v[i] = sin(v[n.a]); break;
            case Op::cos: v[i] = cos(v[n.a]); break;
            case Op::abs: v[i] = abs(v[n.a]); break;
            case Op::neg: v[i] = -v[n.a]; break;
            case Op::floor: v[i] = floor(v[n.a]); break;
            case Op::max: v[i] = max(v[n.a], v[n.b]); break;
            case Op::min: v[i] = min(v[n.a], v[n.b]); break;
        }
    }
    return v;
}

template <class T>
T eval(const Expr& e, std::span<const T> x) {
    return eval_nodes(e, x).back();
}

inline Hazard probe(const Expr& e, std::span<const double> x) {
    using std::fabs;
    Hazard h;
    std::vector<double> v = eval_nodes(e, x);
    for (size_t i = 0; i < e.nodes.size(); i++) {
        const Node& n = e.nodes[i];
        h.max_value = std::max(h.max_value, fabs(v[i]));
        switch (n.op) {
            case Op::div: h.min_denom = std::min(h.min_denom, fabs(v[n.b])); break;
            case Op::sqrt: h.min_sqrt_arg = std::min(h.min_sqrt_arg, v[n.a]); break;
            case Op::exp: h.max_exp_arg = std::max(h.max_exp_arg, v[n.a]); break;
            case Op::abs: h.min_abs_gap = std::min(h.min_abs_gap, fabs(v[n.a])); break;
            case Op::floor: {
                double f = v[n.a] - std::floor(v[n.a]);
                h.min_step_gap = std::min(h.min_step_gap, std::min(f, 1.0 - f));
                break;
            }
            case Op::max:
            case Op::min:
                h.min_abs_gap = std::min(h.min_abs_gap, fabs(v[n.a] - v[n.b]));
                break;
            default: break;
        }
    }
    return h;
}

// Builds a tree of at most `budget` internal nodes referencing every input at
// least once. Nodes are emitted children-first, so the vector order is
// already topological.
inline Expr make_expr(std::mt19937& rng, int n_inputs, int budget) {
    Expr e;
    e.n_inputs = n_inputs;
    std::uniform_real_distribution<double> uc(-2.0, 2.0);
    std::uniform_int_distribution<int> uop(0, 12);

    // leaves: all inputs, then a few constants
    std::vector<int> pool;
    for (int i = 0; i < n_inputs; i++) {
        e.nodes.push_back({Op::input, -1, -1, double(i)});
        pool.push_back(int(e.nodes.size()) - 1);
    }
    int n_const = std::uniform_int_distribution<int>(1, 2)(rng);
    for (int i = 0; i < n_const; i++) {
        e.nodes.push_back({Op::constant, -1, -1, uc(rng)});
        pool.push_back(int(e.nodes.size()) - 1);
    }

    auto pick = [&](int exclude) {
        int i = std::uniform_int_distribution<int>(0, int(pool.size()) - 1)(rng);
        if (int(pool.size()) > 1 && i == exclude) i = (i + 1) % int(pool.size());
        return i;
    };

    // combine until the pool is a single root, spending the budget
    int spent = 0;
    while (pool.size() > 1 || spent < budget) {
        spent++;
        if (spent > budget && pool.size() > 1) {
            // out of budget: force binary combines to converge
            int ia = pick(-1), a = pool[ia];
            pool.erase(pool.begin() + ia);
            int ib = pick(-1), b = pool[ib];
            pool.erase(pool.begin() + ib);
            e.nodes.push_back({Op::add, a, b, 0});
            pool.push_back(int(e.nodes.size()) - 1);
            continue;
        }
        int k = uop(rng);
        if (k < 6 && pool.size() > 1) {  // binary
            static const Op bin[6] = {Op::add, Op::sub, Op::mul,
                                      Op::div, Op::max, Op::min};
            int ia = pick(-1), a = pool[ia];
            pool.erase(pool.begin() + ia);
            int ib = pick(-1), b = pool[ib];
            pool.erase(pool.begin() + ib);
            e.nodes.push_back({bin[k], a, b, 0});
        } else {  // unary on a random pool entry (kept in pool via replace)
            static const Op un[7] = {Op::exp, Op::sqrt, Op::sin, Op::cos,
                                     Op::abs, Op::neg,  Op::floor};
            int ia = pick(-1), a = pool[ia];
            pool.erase(pool.begin() + ia);
            e.nodes.push_back({un[k % 7], a, -1, 0});
        }
        pool.push_back(int(e.nodes.size()) - 1);
    }
    return e;
}

struct Sample {
    Expr expr;
    std::vector<double> x;
};

// Draws an expression plus an evaluation point that is safe for both the
// forward/reverse comparison and the finite-difference comparison.
inline Sample draw(std::mt19937& rng, int max_nodes = 50) {
    std::uniform_int_distribution<int> uni(1, 4);
    std::uniform_real_distribution<double> ux(-2.0, 2.0);
    for (;;) {
        int n_inputs = uni(rng);
        int budget = std::uniform_int_distribution<int>(3, max_nodes / 2)(rng);
        Expr e = make_expr(rng, n_inputs, budget);
        if (int(e.nodes.size()) > max_nodes) continue;
        for (int attempt = 0; attempt < 40; attempt++) {
            std::vector<double> x(n_inputs);
            for (double& xi : x) xi = ux(rng);
            if (!probe(e, x).ok()) continue;
            // every input must carry a usable gradient, otherwise the FD
            // comparison is dominated by roundoff noise
            std::vector<double> g;
            try {
                g = drender::grad(
                    [&](std::span<const drender::Rev> xs) { return eval(e, xs); }, x);
            } catch (const drender::EvalDomainError&) {
                continue;
            }
            bool usable = true;
            for (double gi : g)
                if (std::fabs(gi) < 0.05 || std::fabs(gi) > 1e3) usable = false;
            if (!usable) continue;
            return {std::move(e), std::move(x)};
        }
    }
}

}  // namespace exprgen
