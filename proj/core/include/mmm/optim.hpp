#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "mmm/tensor.hpp"

namespace mmm {

// Linear warmup to lr_max over the first warmup*total_steps steps, then
// linear decay back to zero at total_steps.
struct LrSchedule {
    double lr_max = 1.0;
    long total_steps = 1;
    double warmup = 0.1;
};

inline double lr_at(const LrSchedule& s, long step) {
    if (s.lr_max <= 0.0) throw UsageError("lr_at: lr_max must be positive");
    if (s.total_steps <= 0) throw UsageError("lr_at: total_steps must be positive");
    if (s.warmup <= 0.0 || s.warmup >= 1.0) throw UsageError("lr_at: warmup must be in (0,1)");
    if (step < 0 || step > s.total_steps) throw UsageError("lr_at: step outside [0, total_steps]");
    const double boundary = s.warmup * static_cast<double>(s.total_steps);
    const double t = static_cast<double>(step);
    if (t <= boundary) return s.lr_max * t / boundary;
    return s.lr_max * (static_cast<double>(s.total_steps) - t) /
           (static_cast<double>(s.total_steps) - boundary);
}

// Bias-corrected Adam. Moments are kept in the parameter order given at each
// step; all updates are plain loops so repeated runs are bit-identical.
template <class Real>
struct AdamState {
    std::vector<std::vector<Real>> m;
    std::vector<std::vector<Real>> v;
    long step = 0;
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);
};

template <class Real>
void adam_init(AdamState<Real>& state, const std::vector<Tensor<Real>>& params) {
    state.m.clear();
    state.v.clear();
    state.step = 0;
    for (const auto& p : params) {
        state.m.emplace_back(p.size(), Real(0));
        state.v.emplace_back(p.size(), Real(0));
    }
}

template <class Real>
void adam_step(std::vector<Tensor<Real>>& params, AdamState<Real>& state, Real lr) {
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam_step: state does not match parameter list");
    state.step += 1;
    const Real bc1 = Real(1) - std::pow(state.beta1, static_cast<Real>(state.step));
    const Real bc2 = Real(1) - std::pow(state.beta2, static_cast<Real>(state.step));
    for (size_t p = 0; p < params.size(); ++p) {
        if (state.m[p].size() != params[p].size())
            throw ShapeError("adam_step: moment shape does not match parameter");
        auto& value = params[p].value();
        const auto& grad = params[p].grad();
        auto& m = state.m[p];
        auto& v = state.v[p];
        for (size_t i = 0; i < value.size(); ++i) {
            m[i] = state.beta1 * m[i] + (Real(1) - state.beta1) * grad[i];
            v[i] = state.beta2 * v[i] + (Real(1) - state.beta2) * grad[i] * grad[i];
            const Real mhat = m[i] / bc1;
            const Real vhat = v[i] / bc2;
            value[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

template <class Real>
Real global_grad_norm(const std::vector<Tensor<Real>>& params) {
    Real sq = 0;
    for (const auto& p : params)
        for (Real g : p.grad()) sq += g * g;
    return std::sqrt(sq);
}

// Scales every gradient by max_norm/norm when the global L2 norm exceeds
// max_norm. A disengaged clip (nullopt, or a configured value <= 0) is a
// no-op. Returns the pre-clip norm.
template <class Real>
Real clip_global_norm(std::vector<Tensor<Real>>& params, std::optional<Real> max_norm) {
    Real norm = global_grad_norm(params);
    if (!max_norm.has_value()) return norm;
    if (*max_norm <= Real(0)) throw UsageError("clip_global_norm: max_norm must be positive");
    if (norm > *max_norm) {
        const Real s = *max_norm / norm;
        for (auto& p : params)
            for (Real& g : p.grad()) g *= s;
    }
    return norm;
}

template <class Real>
void scale_grads(std::vector<Tensor<Real>>& params, Real s) {
    for (auto& p : params)
        for (Real& g : p.grad()) g *= s;
}

template <class Real>
void zero_grads(std::vector<Tensor<Real>>& params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace mmm
