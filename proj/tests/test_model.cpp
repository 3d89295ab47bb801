#include <doctest.h>

#include <chrono>

#include "fusion/model.hpp"
#include "fusion/optim.hpp"
#include "testutil.hpp"

using namespace fusion;

namespace {

template <typename S>
Tensor<S> random_map(Index n, Rng& rng) {
    Buffer<S> b(n * 3 * kMapSize * kMapSize);
    for (Index i = 0; i < b.size(); ++i) b[i] = S(rng.uniform());
    return Tensor<S>::from({n, 3, kMapSize, kMapSize}, std::move(b));
}

template <typename S>
Tensor<S> random_clip(Index n, Index t, Rng& rng) {
    Buffer<S> b(n * 3 * t * kIrSize * kIrSize);
    for (Index i = 0; i < b.size(); ++i) b[i] = S(rng.uniform());
    return Tensor<S>::from({n, 3, t, kIrSize, kIrSize}, std::move(b));
}

ModelConfig toy_config(double width = 0.25, Index t = 8, Index classes = 4) {
    ModelConfig config;
    config.class_count = classes;
    config.width_multiplier = width;
    config.clip_length = t;
    return config;
}

}  // namespace

TEST_CASE("dimension contracts at width 1: 512 + 512 -> 1024 -> 256/128/C") {
    ModelConfig config;
    config.class_count = 60;
    config.clip_length = 8;
    config.validate();
    CHECK(config.pose_features() == 512);
    CHECK(config.ir_features() == 512);
    CHECK(config.mlp_input_dim() == 1024);
    CHECK(config.scaled(256) == 256);
    CHECK(config.scaled(128) == 128);

    FusionNetwork<float> net(config, 1);
    auto set = net.param_set();
    auto shape_of = [&](const std::string& name) -> Shape {
        for (auto& [n, t] : set.params) {
            if (n == name) return t.shape();
        }
        FAIL("missing parameter ", name);
        return {};
    };
    CHECK(shape_of("mlp.fc1.weight") == Shape{256, 1024});
    CHECK(shape_of("mlp.fc2.weight") == Shape{128, 256});
    CHECK(shape_of("mlp.fc3.weight") == Shape{60, 128});
    CHECK(shape_of("pose.stem.conv.weight") == Shape{64, 3, 7, 7});
    CHECK(shape_of("pose.block7.conv2.weight") == Shape{512, 512, 3, 3});
    CHECK(shape_of("ir.block7.conv2.temporal.weight") == Shape{512, 1152, 3, 1, 1});
}

TEST_CASE("parameter parity: every factorized block at width 1 within 0.5% of the full 3D count") {
    ModelConfig config;
    config.clip_length = 8;
    FusionNetwork<float> net(config, 2);
    const auto convs = net.ir_backbone()->factorized_convs();
    CHECK(convs.size() == 17);  // stem + 2 convs in each of 8 blocks
    for (const auto* conv : convs) {
        const Index factorized = conv->parameter_count();
        const Index full = conv->full3d_parameter_count();
        CHECK(factorized <= full);
        CHECK(double(full - factorized) / double(full) <= 0.005);
    }
    // the 64->64 3x3x3 block is exactly parameter-equal
    bool found_exact = false;
    for (const auto* conv : convs) {
        if (conv->spec.in_channels == 64 && conv->spec.out_channels == 64 &&
            conv->spec.kernel_space == 3) {
            CHECK(conv->mid == 144);
            CHECK(conv->parameter_count() == 110592);
            CHECK(conv->full3d_parameter_count() == 110592);
            found_exact = true;
            break;
        }
    }
    CHECK(found_exact);
}

TEST_CASE("toy widths scale the feature dims: w=0.25 gives 128") {
    auto config = toy_config(0.25, 8);
    CHECK(config.pose_features() == 128);
    CHECK(config.ir_features() == 128);
    CHECK(config.mlp_input_dim() == 256);

    FusionNetwork<float> net(config, 3);
    Rng rng(5);
    auto map = random_map<float>(2, rng);
    auto features = net.pose_features(map, false);
    CHECK(features.shape() == Shape{2, 128});
}

TEST_CASE("ir features: clip length is absorbed by global pooling") {
    Rng rng(7);
    for (Index t : {Index(8), Index(20)}) {
        auto config = toy_config(0.125, t);
        FusionNetwork<float> net(config, 4);
        auto clip = random_clip<float>(1, t, rng);
        auto features = net.ir_features(clip, false);
        CHECK(features.shape() == Shape{1, config.ir_features()});
    }
}

TEST_CASE("ir module rejects mismatched clip length and extents") {
    auto config = toy_config(0.125, 8);
    FusionNetwork<float> net(config, 5);
    Rng rng(9);
    auto wrong_t = random_clip<float>(1, 12, rng);
    CHECK_THROWS_WITH_AS(net.ir_features(wrong_t, false), doctest::Contains("clip length"),
                         std::invalid_argument);
    auto bad = Tensor<float>::zeros({1, 3, 8, 64, 64});
    CHECK_THROWS_AS(net.ir_features(bad, false), std::invalid_argument);
    auto bad_map = Tensor<float>::zeros({1, 3, 128, 128});
    CHECK_THROWS_AS(net.pose_features(bad_map, false), std::invalid_argument);
}

TEST_CASE("forward probabilities: rows sum to 1, near-uniform at initialization") {
    auto config = toy_config(0.125, 8, 5);
    FusionNetwork<float> net(config, 6);
    Rng rng(11);
    auto map = random_map<float>(3, rng);
    auto clip = random_clip<float>(3, 8, rng);
    auto probs = net.forward_probabilities(map, clip, false);
    CHECK(probs.shape() == Shape{3, 5});
    for (Index i = 0; i < 3; ++i) {
        double row = 0.0;
        for (Index c = 0; c < 5; ++c) {
            const double p = probs.value()[i * 5 + c];
            CHECK(p >= 0.0);
            CHECK(p == doctest::Approx(0.2).epsilon(0.05));  // near-uniform head at init
            row += p;
        }
        CHECK(std::abs(row - 1.0) < 1e-6);
    }
}

TEST_CASE("zero input in eval mode produces finite outputs") {
    auto config = toy_config(0.125, 8);
    FusionNetwork<float> net(config, 7);
    auto map = Tensor<float>::zeros({1, 3, kMapSize, kMapSize});
    auto clip = Tensor<float>::zeros({1, 3, 8, kIrSize, kIrSize});
    auto probs = net.forward_probabilities(map, clip, false);
    for (Index i = 0; i < probs.size(); ++i) CHECK(std::isfinite(probs.value()[i]));
}

TEST_CASE("eval mode: permuting the batch permutes outputs identically") {
    auto config = toy_config(0.125, 8);
    FusionNetwork<float> net(config, 8);
    Rng rng(13);
    auto map = random_map<float>(3, rng);
    auto clip = random_clip<float>(3, 8, rng);
    auto probs = net.forward_probabilities(map, clip, false);

    // rotate the batch by one
    const Index map_stride = 3 * kMapSize * kMapSize;
    const Index clip_stride = 3 * 8 * kIrSize * kIrSize;
    Buffer<float> pm(map.size()), pc(clip.size());
    for (Index n = 0; n < 3; ++n) {
        const Index src = (n + 1) % 3;
        pm.segment(n * map_stride, map_stride) = map.value().segment(src * map_stride, map_stride);
        pc.segment(n * clip_stride, clip_stride) =
            clip.value().segment(src * clip_stride, clip_stride);
    }
    auto map2 = Tensor<float>::from({3, 3, kMapSize, kMapSize}, std::move(pm));
    auto clip2 = Tensor<float>::from({3, 3, 8, kIrSize, kIrSize}, std::move(pc));
    auto probs2 = net.forward_probabilities(map2, clip2, false);
    for (Index n = 0; n < 3; ++n) {
        const Index src = (n + 1) % 3;
        for (Index c = 0; c < 4; ++c) {
            CHECK(probs2.value()[n * 4 + c] == doctest::Approx(probs.value()[src * 4 + c]).epsilon(1e-5));
        }
    }
}

TEST_CASE("gradient flow: one backward reaches pose, ir and mlp parameter groups") {
    auto config = toy_config(0.125, 8);
    FusionNetwork<float> net(config, 9);
    Rng rng(17);
    auto map = random_map<float>(2, rng);
    auto clip = random_clip<float>(2, 8, rng);
    auto logits = net.forward_logits(map, clip, true);
    auto loss = softmax_cross_entropy(logits, {0, 2});
    backward(loss, true);

    auto set = net.param_set();
    double pose_norm = 0, ir_norm = 0, mlp_norm = 0;
    for (auto& [name, tensor] : set.params) {
        const double norm = tensor.has_grad() ? double(tensor.grad().matrix().norm()) : 0.0;
        if (name.rfind("pose.", 0) == 0) pose_norm += norm;
        if (name.rfind("ir.", 0) == 0) ir_norm += norm;
        if (name.rfind("mlp.", 0) == 0) mlp_norm += norm;
    }
    CHECK(pose_norm > 0.0);
    CHECK(ir_norm > 0.0);
    CHECK(mlp_norm > 0.0);
}

TEST_CASE("single-module variants build, run, and use a feature-dim head") {
    Rng rng(19);
    {
        auto config = toy_config(0.125, 8);
        config.mode = FusionMode::pose_only;
        CHECK(config.mlp_input_dim() == config.pose_features());
        FusionNetwork<float> net(config, 10);
        auto map = random_map<float>(2, rng);
        auto probs = net.forward_probabilities(map, Tensor<float>{}, false);
        CHECK(probs.shape() == Shape{2, 4});
    }
    {
        auto config = toy_config(0.125, 8);
        config.mode = FusionMode::ir_only;
        FusionNetwork<float> net(config, 11);
        auto clip = random_clip<float>(2, 8, rng);
        auto probs = net.forward_probabilities(Tensor<float>{}, clip, false);
        CHECK(probs.shape() == Shape{2, 4});
    }
}

TEST_CASE("logit-averaging fusion variant builds and runs behind its flag") {
    auto config = toy_config(0.125, 8);
    config.logit_fusion = true;
    FusionNetwork<float> net(config, 12);
    Rng rng(23);
    auto map = random_map<float>(2, rng);
    auto clip = random_clip<float>(2, 8, rng);
    auto probs = net.forward_probabilities(map, clip, false);
    CHECK(probs.shape() == Shape{2, 4});
    auto set = net.param_set();
    bool has_mix = false;
    for (auto& [name, tensor] : set.params) has_mix |= name == "mix.ir";
    CHECK(has_mix);
}

TEST_CASE("dropout MLP variant builds and needs a random source only in training") {
    auto config = toy_config(0.125, 8);
    config.mlp_dropout = true;
    FusionNetwork<float> net(config, 13);
    Rng rng(29);
    auto map = random_map<float>(2, rng);
    auto clip = random_clip<float>(2, 8, rng);
    CHECK_NOTHROW(net.forward_probabilities(map, clip, false));
    CHECK_THROWS_AS(net.forward_logits(map, clip, true), std::invalid_argument);
    Rng dropout_rng(31);
    CHECK_NOTHROW(net.forward_logits(map, clip, true, &dropout_rng));
}

TEST_CASE("IR sensitivity: zeroing the IR features changes the predictions") {
    auto config = toy_config(0.125, 8);
    FusionNetwork<float> net(config, 14);
    Rng rng(37);
    int changed = 0;
    const int trials = 20;
    for (int trial = 0; trial < trials; ++trial) {
        auto map = random_map<float>(1, rng);
        auto clip = random_clip<float>(1, 8, rng);
        auto i = net.ir_features(clip, false);
        auto s = net.pose_features(map, false);
        auto with_ir = softmax(net.head_logits(concat(i, s), false));
        auto without_ir = softmax(net.head_logits(concat(Tensor<float>::zeros(i.shape()), s), false));
        double max_diff = 0.0;
        for (Index c = 0; c < 4; ++c) {
            max_diff = std::max(max_diff,
                                std::abs(double(with_ir.value()[c]) - double(without_ir.value()[c])));
        }
        if (max_diff > 1e-6) ++changed;
    }
    CHECK(double(changed) / trials >= 0.9);
}

TEST_CASE("batch of 16 is accepted end to end") {
    auto config = toy_config(0.125, 8);
    FusionNetwork<float> net(config, 15);
    Rng rng(41);
    auto map = random_map<float>(16, rng);
    auto clip = random_clip<float>(16, 8, rng);
    auto logits = net.forward_logits(map, clip, true);
    CHECK(logits.shape() == Shape{16, 4});
}

TEST_CASE("checkpoint: save then load reproduces eval outputs bit-exactly") {
    testutil::TempDir dir("ckpt");
    auto config = toy_config(0.25, 8);
    FusionNetwork<float> net(config, 16);
    Rng rng(43);
    auto map = random_map<float>(2, rng);
    auto clip = random_clip<float>(2, 8, rng);

    // move the running stats off their initial values first
    auto warm = net.forward_logits(map, clip, true);
    auto before = net.forward_probabilities(map, clip, false);

    const std::string path = (dir.path() / "net.ckpt").string();
    save_network(net, path);

    FusionNetwork<float> restored(config, 999);  // different init, fully overwritten
    load_network(restored, path);
    auto after = restored.forward_probabilities(map, clip, false);
    REQUIRE(after.size() == before.size());
    for (Index i = 0; i < after.size(); ++i) {
        CHECK(after.value()[i] == before.value()[i]);
    }
}

TEST_CASE("checkpoint: restoring into a mismatched config reports the shape difference") {
    testutil::TempDir dir("ckptbad");
    auto config = toy_config(0.25, 8);
    FusionNetwork<float> net(config, 17);
    const std::string path = (dir.path() / "net.ckpt").string();
    save_network(net, path);

    auto other = toy_config(0.125, 8);
    FusionNetwork<float> narrow(other, 18);
    CHECK_THROWS_WITH_AS(load_network(narrow, path), doctest::Contains("shape"), std::runtime_error);

    auto pose_only = toy_config(0.25, 8);
    pose_only.mode = FusionMode::pose_only;
    FusionNetwork<float> partial(pose_only, 19);
    CHECK_THROWS_AS(load_network(partial, path), std::runtime_error);
}

TEST_CASE("toy configs run forward+backward on a batch of 4 in under 5 seconds") {
    Rng rng(47);
    for (double width : {0.125, 0.25}) {
        auto config = toy_config(width, 8);
        FusionNetwork<float> net(config, 20);
        auto map = random_map<float>(4, rng);
        auto clip = random_clip<float>(4, 8, rng);
        auto params = net.param_set().tensors();

        const auto t0 = std::chrono::steady_clock::now();
        zero_grad(params);
        auto loss = softmax_cross_entropy(net.forward_logits(map, clip, true), {0, 1, 2, 3});
        backward(loss, true);
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        INFO("width ", width, " took ", seconds, " s");
        CHECK(seconds < 5.0);
    }
}
