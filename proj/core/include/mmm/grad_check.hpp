#pragma once

#include <functional>
#include <vector>

#include "mmm/tensor.hpp"

namespace mmm {

// rel err = |a - n| / (|a| + |n| + 1e-12), elementwise
template <class Real>
Real max_rel_err(const std::vector<std::vector<Real>>& analytic,
                 const std::vector<std::vector<Real>>& numeric) {
    if (analytic.size() != numeric.size()) throw UsageError("max_rel_err: list size mismatch");
    Real worst = 0;
    for (size_t p = 0; p < analytic.size(); ++p) {
        if (analytic[p].size() != numeric[p].size()) throw UsageError("max_rel_err: length mismatch");
        for (size_t i = 0; i < analytic[p].size(); ++i) {
            Real a = analytic[p][i], n = numeric[p][i];
            Real err = std::abs(a - n) / (std::abs(a) + std::abs(n) + Real(1e-12));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

// Central finite differences of a scalar-valued graph builder with respect to
// each coordinate of each parameter. The builder must be deterministic
// (dropout off / fixed rng) because it runs twice per coordinate.
template <class Real>
std::vector<std::vector<Real>> fd_gradient(const std::function<Tensor<Real>()>& fn,
                                           std::vector<Tensor<Real>>& params, Real eps = Real(1e-5)) {
    std::vector<std::vector<Real>> out;
    out.reserve(params.size());
    NoGradGuard ng;  // numeric probes do not need graphs
    for (auto& p : params) {
        std::vector<Real> g(p.size());
        for (size_t i = 0; i < p.size(); ++i) {
            const Real saved = p.value()[i];
            p.value()[i] = saved + eps;
            const Real fp = fn().item();
            p.value()[i] = saved - eps;
            const Real fm = fn().item();
            p.value()[i] = saved;
            g[i] = (fp - fm) / (Real(2) * eps);
        }
        out.push_back(std::move(g));
    }
    return out;
}

template <class Real>
std::vector<std::vector<Real>> analytic_gradient(const std::function<Tensor<Real>()>& fn,
                                                 std::vector<Tensor<Real>>& params) {
    for (auto& p : params) {
        p.zero_grad();
        p.set_requires_grad(true);
    }
    Tensor<Real> y = fn();
    y.backward();
    std::vector<std::vector<Real>> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(p.grad());
    return out;
}

// Max relative error between reverse-mode and central-difference gradients.
template <class Real>
Real grad_check(const std::function<Tensor<Real>()>& fn, std::vector<Tensor<Real>>& params,
                Real eps = Real(1e-5)) {
    auto analytic = analytic_gradient(fn, params);
    auto numeric = fd_gradient(fn, params, eps);
    return max_rel_err(analytic, numeric);
}

}  // namespace mmm
