#include <doctest.h>

#include <cmath>

#include "fusion/ops.hpp"
#include "fusion/optim.hpp"

using namespace fusion;

namespace {

std::vector<Tensor<double>> single_param(const Buffer<double>& grad_values) {
    auto p = Tensor<double>::zeros({grad_values.size()}, true);
    p.grad() = grad_values;
    return {p};
}

}  // namespace

TEST_CASE("clip_gradients: norm 20 against max 10 halves every gradient") {
    Buffer<double> g = Buffer<double>::Zero(16);
    g[0] = 20.0;
    auto params = single_param(g);
    const double scale = clip_gradients(params, 10.0);
    CHECK(scale == doctest::Approx(0.5));
    CHECK(params[0].grad()[0] == doctest::Approx(10.0));
}

TEST_CASE("clip_gradients: norm below the limit is untouched") {
    Buffer<double> g = Buffer<double>::Zero(4);
    g[1] = 3.0;
    auto params = single_param(g);
    const double scale = clip_gradients(params, 10.0);
    CHECK(scale == 1.0);
    CHECK(params[0].grad()[1] == 3.0);
}

TEST_CASE("clip_gradients: many parameters land on the target norm and clipping is idempotent") {
    Rng rng(101);
    std::vector<Tensor<double>> params;
    for (int i = 0; i < 7; ++i) {
        auto p = Tensor<double>::zeros({3 + Index(i)}, true);
        auto& g = p.grad();
        for (Index k = 0; k < g.size(); ++k) g[k] = rng.normal(0.0, 4.0);
        params.push_back(p);
    }
    REQUIRE(global_grad_norm(params) > 10.0);
    clip_gradients(params, 10.0);
    CHECK(std::abs(global_grad_norm(params) - 10.0) < 1e-6);

    std::vector<Buffer<double>> snapshot;
    for (auto& p : params) snapshot.push_back(p.grad());
    clip_gradients(params, 10.0);  // second application must be a no-op
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (Index k = 0; k < snapshot[i].size(); ++k) {
            CHECK(params[i].grad()[k] == snapshot[i][k]);
        }
    }
}

TEST_CASE("adam_step: first step moves by about the learning rate") {
    for (double g0 : {0.01, 1.0, 250.0}) {
        auto p = Tensor<double>::full({1}, 1.0, true);
        p.grad()[0] = g0;
        std::vector<Tensor<double>> params{p};
        AdamState<double> state;
        state.init(params);
        adam_step(state, params);
        const double step = 1.0 - p.value()[0];
        CHECK(step > 0.0);
        CHECK(step == doctest::Approx(state.learning_rate).epsilon(1e-2));
    }
}

TEST_CASE("adam_step: zero gradient leaves parameters unchanged") {
    auto p = Tensor<double>::full({5}, 2.5, true);
    std::vector<Tensor<double>> params{p};
    AdamState<double> state;
    state.init(params);
    adam_step(state, params);
    for (Index i = 0; i < 5; ++i) CHECK(p.value()[i] == 2.5);
}

TEST_CASE("adam_step: rejects mismatched state") {
    auto p = Tensor<double>::zeros({4}, true);
    std::vector<Tensor<double>> params{p};
    AdamState<double> state;
    state.init(params);
    auto q = Tensor<double>::zeros({6}, true);
    std::vector<Tensor<double>> other{q};
    CHECK_THROWS_AS(adam_step(state, other), std::invalid_argument);
}

// Independent reference Adam, coded directly from the update rule on plain
// vectors, used as the oracle for a 10-step trace on a fixed quadratic.
namespace reference {

struct Adam {
    double lr = 1e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    int t = 0;
    std::vector<double> m, v;

    void step(std::vector<double>& theta, const std::vector<double>& grad) {
        if (m.empty()) {
            m.assign(theta.size(), 0.0);
            v.assign(theta.size(), 0.0);
        }
        ++t;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            const double mhat = m[i] / (1.0 - std::pow(b1, t));
            const double vhat = v[i] / (1.0 - std::pow(b2, t));
            theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

}  // namespace reference

TEST_CASE("adam_step: 10-step trace on a quadratic matches the reference implementation") {
    // f(theta) = 0.5 * sum_i a_i * (theta_i - target_i)^2, grad = a * (theta - target)
    const std::vector<double> a{1.0, 4.0, 0.5, 9.0};
    const std::vector<double> target{0.3, -1.2, 2.0, 0.0};
    std::vector<double> ref_theta{1.0, 1.0, 1.0, 1.0};
    reference::Adam ref;

    auto p = Tensor<double>::full({4}, 1.0, true);
    std::vector<Tensor<double>> params{p};
    AdamState<double> state;
    state.init(params);

    for (int step = 0; step < 10; ++step) {
        std::vector<double> ref_grad(4);
        for (int i = 0; i < 4; ++i) ref_grad[i] = a[i] * (ref_theta[i] - target[i]);
        ref.step(ref_theta, ref_grad);

        zero_grad(params);
        for (Index i = 0; i < 4; ++i) p.grad()[i] = a[i] * (p.value()[i] - target[i]);
        adam_step(state, params);

        for (int i = 0; i < 4; ++i) {
            CHECK(p.value()[i] == doctest::Approx(ref_theta[i]).epsilon(1e-12));
        }
    }
    CHECK(state.step_count == 10);
}

TEST_CASE("training step determinism: identical seeds give bit-identical parameters") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        auto x = Tensor<float>::randn({4, 6}, rng, 1.0f);
        auto w = Tensor<float>::randn({3, 6}, rng, 0.5f, true);
        auto b = Tensor<float>::zeros({3}, true);
        std::vector<Tensor<float>> params{w, b};
        AdamState<float> state;
        state.init(params);
        for (int step = 0; step < 3; ++step) {
            zero_grad(params);
            auto loss = softmax_cross_entropy(linear(x, w, b), {0, 1, 2, 0});
            backward(loss);
            clip_gradients(params, 10.0f);
            adam_step(state, params);
        }
        return std::make_pair(w.value(), b.value());
    };
    auto [w1, b1] = run(42);
    auto [w2, b2] = run(42);
    for (Index i = 0; i < w1.size(); ++i) CHECK(w1[i] == w2[i]);
    for (Index i = 0; i < b1.size(); ++i) CHECK(b1[i] == b2[i]);
}
