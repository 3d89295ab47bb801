#pragma once

#include <cmath>

#include "fusion/tensor.hpp"

namespace fusion {

template <typename S>
S global_grad_norm(const std::vector<Tensor<S>>& params) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (p.has_grad()) sq += double(p.node()->grad.square().sum());
    }
    return S(std::sqrt(sq));
}

// Global L2-norm clipping: if the norm exceeds max_norm every gradient is
// scaled by max_norm / norm. Returns the scale applied (1 when untouched).
// The small slack keeps a second application a no-op.
template <typename S>
S clip_gradients(std::vector<Tensor<S>>& params, S max_norm) {
    const S norm = global_grad_norm(params);
    if (!(norm > max_norm * (S(1) + S(1e-12)))) return S(1);
    const S scale = max_norm / norm;
    for (auto& p : params) {
        if (p.has_grad()) p.node()->grad *= scale;
    }
    return scale;
}

template <typename S>
void zero_grad(std::vector<Tensor<S>>& params) {
    for (auto& p : params) p.zero_grad();
}

// Adam with bias correction. Moment buffers are indexed in step with the
// parameter list handed to init().
template <typename S>
struct AdamState {
    S learning_rate = S(1e-4);
    S beta1 = S(0.9);
    S beta2 = S(0.999);
    S epsilon = S(1e-8);
    std::int64_t step_count = 0;
    std::vector<Buffer<S>> first_moment;
    std::vector<Buffer<S>> second_moment;

    void init(const std::vector<Tensor<S>>& params) {
        step_count = 0;
        first_moment.clear();
        second_moment.clear();
        for (const auto& p : params) {
            first_moment.push_back(Buffer<S>::Zero(p.size()));
            second_moment.push_back(Buffer<S>::Zero(p.size()));
        }
    }

    bool initialized_for(const std::vector<Tensor<S>>& params) const {
        if (first_moment.size() != params.size()) return false;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (first_moment[i].size() != params[i].size()) return false;
        }
        return true;
    }
};

template <typename S>
void adam_step(AdamState<S>& state, std::vector<Tensor<S>>& params) {
    if (!state.initialized_for(params)) {
        throw std::invalid_argument("adam_step: state does not match parameter shapes");
    }
    ++state.step_count;
    const S bc1 = S(1) - S(std::pow(double(state.beta1), double(state.step_count)));
    const S bc2 = S(1) - S(std::pow(double(state.beta2), double(state.step_count)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        const Buffer<S>& g = p.grad();  // zero-filled when the parameter was unreachable
        Buffer<S>& m = state.first_moment[i];
        Buffer<S>& v = state.second_moment[i];
        m = state.beta1 * m + (S(1) - state.beta1) * g;
        v = state.beta2 * v + (S(1) - state.beta2) * g.square();
        p.value() -= state.learning_rate * (m / bc1) / ((v / bc2).sqrt() + state.epsilon);
    }
}

}  // namespace fusion
