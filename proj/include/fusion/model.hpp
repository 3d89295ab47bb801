#pragma once

#include <json.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <string>

#include "fusion/checkpoint.hpp"
#include "fusion/ops.hpp"

namespace fusion {

inline constexpr Index kMapSize = 224;  // pose module input extent
inline constexpr Index kIrSize = 112;   // IR module input extent

enum class FusionMode { fusion, pose_only, ir_only };

inline const char* to_string(FusionMode mode) {
    switch (mode) {
        case FusionMode::fusion: return "fusion";
        case FusionMode::pose_only: return "pose_only";
        case FusionMode::ir_only: return "ir_only";
    }
    return "?";
}

inline FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "fusion") return FusionMode::fusion;
    if (s == "pose_only") return FusionMode::pose_only;
    if (s == "ir_only") return FusionMode::ir_only;
    throw std::invalid_argument("unknown mode '" + s + "' (expected fusion|pose_only|ir_only)");
}

// Scale knobs for the desk-size variants. Feature dims are the width-1 values;
// every channel count scales by width_multiplier (min 1).
struct ModelConfig {
    Index class_count = 60;
    Index pose_feature_dim = 512;
    Index ir_feature_dim = 512;
    double width_multiplier = 1.0;
    Index clip_length = 20;  // T
    std::array<Index, 4> pose_stage_depths{2, 2, 2, 2};
    std::array<Index, 4> ir_stage_depths{2, 2, 2, 2};
    FusionMode mode = FusionMode::fusion;
    bool logit_fusion = false;  // paper's rejected averaging variant, off by default
    bool mlp_dropout = false;   // dropout instead of batch norm in the head

    Index scaled(Index base) const {
        return std::max<Index>(1, static_cast<Index>(std::llround(base * width_multiplier)));
    }

    Index pose_features() const { return scaled(pose_feature_dim); }
    Index ir_features() const { return scaled(ir_feature_dim); }

    Index mlp_input_dim() const {
        switch (mode) {
            case FusionMode::fusion: return ir_features() + pose_features();
            case FusionMode::pose_only: return pose_features();
            case FusionMode::ir_only: return ir_features();
        }
        return 0;
    }

    void validate() const {
        if (class_count < 2) throw std::invalid_argument("model config: class_count must be >= 2");
        if (pose_feature_dim < 1 || ir_feature_dim < 1) {
            throw std::invalid_argument("model config: feature dims must be >= 1");
        }
        if (width_multiplier <= 0.0) {
            throw std::invalid_argument("model config: width_multiplier must be positive");
        }
        if (clip_length < 1) throw std::invalid_argument("model config: clip_length must be >= 1");
        for (Index d : pose_stage_depths) {
            if (d < 1) throw std::invalid_argument("model config: stage depths must be >= 1");
        }
        for (Index d : ir_stage_depths) {
            if (d < 1) throw std::invalid_argument("model config: stage depths must be >= 1");
        }
    }

    nlohmann::json to_json() const {
        return {{"class_count", class_count},
                {"pose_feature_dim", pose_feature_dim},
                {"ir_feature_dim", ir_feature_dim},
                {"width_multiplier", width_multiplier},
                {"clip_length", clip_length},
                {"pose_stage_depths", pose_stage_depths},
                {"ir_stage_depths", ir_stage_depths},
                {"mode", to_string(mode)},
                {"logit_fusion", logit_fusion},
                {"mlp_dropout", mlp_dropout}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.class_count = j.at("class_count").get<Index>();
        c.pose_feature_dim = j.at("pose_feature_dim").get<Index>();
        c.ir_feature_dim = j.at("ir_feature_dim").get<Index>();
        c.width_multiplier = j.at("width_multiplier").get<double>();
        c.clip_length = j.at("clip_length").get<Index>();
        c.pose_stage_depths = j.at("pose_stage_depths").get<std::array<Index, 4>>();
        c.ir_stage_depths = j.at("ir_stage_depths").get<std::array<Index, 4>>();
        c.mode = fusion_mode_from_string(j.at("mode").get<std::string>());
        c.logit_fusion = j.at("logit_fusion").get<bool>();
        c.mlp_dropout = j.at("mlp_dropout").get<bool>();
        return c;
    }
};

// Learnable parameters plus the non-learnable running buffers, both under
// hierarchical dot-separated names matching the checkpoint format.
template <typename S>
struct ParamSet {
    std::vector<std::pair<std::string, Tensor<S>>> params;
    std::vector<std::pair<std::string, Buffer<S>*>> state;

    std::vector<Tensor<S>> tensors() const {
        std::vector<Tensor<S>> out;
        out.reserve(params.size());
        for (const auto& [name, tensor] : params) out.push_back(tensor);
        return out;
    }

    Index parameter_count() const {
        Index total = 0;
        for (const auto& [name, tensor] : params) total += tensor.size();
        return total;
    }
};

namespace detail {

template <typename S>
Tensor<S> he_init(Shape shape, Index fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / double(fan_in));
    return Tensor<S>::randn(std::move(shape), rng, S(stddev), /*requires_grad=*/true);
}

}  // namespace detail

template <typename S>
struct Conv2dLayer {
    ConvSpec spec;
    Tensor<S> weight;  // bias-free, batch norm follows

    void init(const ConvSpec& s, Rng& rng) {
        spec = s;
        const Index k = spec.kernel_space;
        weight = detail::he_init<S>({spec.out_channels, spec.in_channels, k, k},
                                    spec.in_channels * k * k, rng);
    }

    Tensor<S> forward(const Tensor<S>& x) const { return conv2d(x, weight, Tensor<S>{}, spec); }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        set.params.emplace_back(prefix + ".weight", weight);
    }
};

template <typename S>
struct Conv3dLayer {
    ConvSpec spec;
    Tensor<S> weight;

    void init(const ConvSpec& s, Rng& rng) {
        spec = s;
        weight = detail::he_init<S>(
            {spec.out_channels, spec.in_channels, spec.kernel_time, spec.kernel_space, spec.kernel_space},
            spec.in_channels * spec.kernel_time * spec.kernel_space * spec.kernel_space, rng);
    }

    Tensor<S> forward(const Tensor<S>& x) const { return conv3d(x, weight, Tensor<S>{}, spec); }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        set.params.emplace_back(prefix + ".weight", weight);
    }
};

// Factorized (2+1)D convolution with parameter-parity mid channels.
template <typename S>
struct FactorizedConvLayer {
    ConvSpec spec;
    Index mid = 0;
    Tensor<S> w_spatial;
    Tensor<S> w_temporal;

    void init(const ConvSpec& s, Rng& rng) {
        spec = s;
        mid = mid_channels(spec.in_channels, spec.out_channels, spec.kernel_time, spec.kernel_space);
        const Index d = spec.kernel_space;
        w_spatial = detail::he_init<S>({mid, spec.in_channels, 1, d, d}, spec.in_channels * d * d, rng);
        w_temporal = detail::he_init<S>({spec.out_channels, mid, spec.kernel_time, 1, 1},
                                        mid * spec.kernel_time, rng);
    }

    Tensor<S> forward(const Tensor<S>& x) const {
        return factorized_conv3d(x, w_spatial, w_temporal, Tensor<S>{}, Tensor<S>{}, spec, mid);
    }

    Index parameter_count() const { return w_spatial.size() + w_temporal.size(); }

    Index full3d_parameter_count() const {
        return spec.kernel_time * spec.kernel_space * spec.kernel_space * spec.in_channels *
               spec.out_channels;
    }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        set.params.emplace_back(prefix + ".spatial.weight", w_spatial);
        set.params.emplace_back(prefix + ".temporal.weight", w_temporal);
    }
};

template <typename S>
struct BatchNormLayer {
    Tensor<S> gamma;
    Tensor<S> beta;
    Buffer<S> running_mean;
    Buffer<S> running_var;
    S momentum = S(0.1);
    S eps = S(1e-5);

    void init(Index channels) {
        gamma = Tensor<S>::full({channels}, S(1), true);
        beta = Tensor<S>::zeros({channels}, true);
        running_mean = Buffer<S>::Zero(channels);
        running_var = Buffer<S>::Constant(channels, S(1));
    }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        return batch_norm(x, gamma, beta, running_mean, running_var, training, momentum, eps);
    }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        set.params.emplace_back(prefix + ".gamma", gamma);
        set.params.emplace_back(prefix + ".beta", beta);
        set.state.emplace_back(prefix + ".running_mean", &running_mean);
        set.state.emplace_back(prefix + ".running_var", &running_var);
    }
};

template <typename S>
struct LinearLayer {
    Tensor<S> weight;
    Tensor<S> bias;

    // head_init keeps the classifier near zero so the untrained network
    // predicts almost exactly the uniform distribution while still passing a
    // nonzero gradient to everything upstream.
    void init(Index in, Index out, Rng& rng, bool head_init = false) {
        if (head_init) {
            weight = Tensor<S>::randn({out, in}, rng, S(1e-3), true);
        } else {
            weight = detail::he_init<S>({out, in}, in, rng);
        }
        bias = Tensor<S>::zeros({out}, true);
    }

    Tensor<S> forward(const Tensor<S>& x) const { return linear(x, weight, bias); }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        set.params.emplace_back(prefix + ".weight", weight);
        set.params.emplace_back(prefix + ".bias", bias);
    }
};

namespace detail {

inline ConvSpec conv_spec_2d(Index in, Index out, Index k, Index stride, Index pad) {
    ConvSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel_space = k;
    s.stride_y = s.stride_x = stride;
    s.pad_y = s.pad_x = pad;
    return s;
}

inline ConvSpec conv_spec_3d(Index in, Index out, Index kt, Index kd, Index st, Index ss, Index pt,
                             Index ps) {
    ConvSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel_time = kt;
    s.kernel_space = kd;
    s.stride_t = st;
    s.stride_y = s.stride_x = ss;
    s.pad_t = pt;
    s.pad_y = s.pad_x = ps;
    return s;
}

}  // namespace detail

template <typename S>
struct BasicBlock2d {
    Conv2dLayer<S> conv1;
    BatchNormLayer<S> bn1;
    Conv2dLayer<S> conv2;
    BatchNormLayer<S> bn2;
    bool has_downsample = false;
    Conv2dLayer<S> down_conv;
    BatchNormLayer<S> down_bn;

    void init(Index in, Index out, Index stride, Rng& rng) {
        conv1.init(detail::conv_spec_2d(in, out, 3, stride, 1), rng);
        bn1.init(out);
        conv2.init(detail::conv_spec_2d(out, out, 3, 1, 1), rng);
        bn2.init(out);
        has_downsample = stride != 1 || in != out;
        if (has_downsample) {
            down_conv.init(detail::conv_spec_2d(in, out, 1, stride, 0), rng);
            down_bn.init(out);
        }
    }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        Tensor<S> y = bn2.forward(conv2.forward(relu(bn1.forward(conv1.forward(x), training))), training);
        Tensor<S> shortcut = has_downsample ? down_bn.forward(down_conv.forward(x), training) : x;
        return relu(add(y, shortcut));
    }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        conv1.register_into(set, prefix + ".conv1");
        bn1.register_into(set, prefix + ".bn1");
        conv2.register_into(set, prefix + ".conv2");
        bn2.register_into(set, prefix + ".bn2");
        if (has_downsample) {
            down_conv.register_into(set, prefix + ".down.conv");
            down_bn.register_into(set, prefix + ".down.bn");
        }
    }
};

template <typename S>
struct BasicBlock3d {
    FactorizedConvLayer<S> conv1;
    BatchNormLayer<S> bn1;
    FactorizedConvLayer<S> conv2;
    BatchNormLayer<S> bn2;
    bool has_downsample = false;
    Conv3dLayer<S> down_conv;
    BatchNormLayer<S> down_bn;

    void init(Index in, Index out, Index stride, Rng& rng) {
        conv1.init(detail::conv_spec_3d(in, out, 3, 3, stride, stride, 1, 1), rng);
        bn1.init(out);
        conv2.init(detail::conv_spec_3d(out, out, 3, 3, 1, 1, 1, 1), rng);
        bn2.init(out);
        has_downsample = stride != 1 || in != out;
        if (has_downsample) {
            down_conv.init(detail::conv_spec_3d(in, out, 1, 1, stride, stride, 0, 0), rng);
            down_bn.init(out);
        }
    }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        Tensor<S> y = bn2.forward(conv2.forward(relu(bn1.forward(conv1.forward(x), training))), training);
        Tensor<S> shortcut = has_downsample ? down_bn.forward(down_conv.forward(x), training) : x;
        return relu(add(y, shortcut));
    }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        conv1.register_into(set, prefix + ".conv1");
        bn1.register_into(set, prefix + ".bn1");
        conv2.register_into(set, prefix + ".conv2");
        bn2.register_into(set, prefix + ".bn2");
        if (has_downsample) {
            down_conv.register_into(set, prefix + ".down.conv");
            down_bn.register_into(set, prefix + ".down.bn");
        }
    }
};

// 18-layer residual pose network: 7x7/2 stem with max pooling, four stages of
// basic blocks at widths 64w..512w, global average pooling.
template <typename S>
struct PoseBackbone {
    Conv2dLayer<S> stem;
    BatchNormLayer<S> stem_bn;
    std::vector<BasicBlock2d<S>> blocks;
    Index feature_dim = 0;

    void init(const ModelConfig& config, Rng& rng) {
        const std::array<Index, 4> widths{config.scaled(64), config.scaled(128), config.scaled(256),
                                          config.scaled(config.pose_feature_dim)};
        stem.init(detail::conv_spec_2d(3, widths[0], 7, 2, 3), rng);
        stem_bn.init(widths[0]);
        Index in = widths[0];
        blocks.clear();
        for (int stage = 0; stage < 4; ++stage) {
            for (Index b = 0; b < config.pose_stage_depths[std::size_t(stage)]; ++b) {
                const Index stride = (stage > 0 && b == 0) ? 2 : 1;
                BasicBlock2d<S> block;
                block.init(in, widths[std::size_t(stage)], stride, rng);
                blocks.push_back(std::move(block));
                in = widths[std::size_t(stage)];
            }
        }
        feature_dim = in;
    }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        if (x.shape().size() != 4 || x.shape()[1] != 3 || x.shape()[2] != kMapSize ||
            x.shape()[3] != kMapSize) {
            throw std::invalid_argument("pose module: expected input [N,3," + std::to_string(kMapSize) +
                                        "," + std::to_string(kMapSize) + "], got " +
                                        shape_str(x.shape()));
        }
        Tensor<S> h = max_pool2d(relu(stem_bn.forward(stem.forward(x), training)), 3, 2, 1);
        for (auto& block : blocks) h = block.forward(h, training);
        return global_average_pool(h);
    }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        stem.register_into(set, prefix + ".stem.conv");
        stem_bn.register_into(set, prefix + ".stem.bn");
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            blocks[b].register_into(set, prefix + ".block" + std::to_string(b));
        }
    }
};

// 18-layer R(2+1)D network: every 3D convolution is a factorized block with
// parameter-parity mid channels, including the 3x7x7 stem; spatiotemporal
// global average pooling.
template <typename S>
struct IrBackbone {
    FactorizedConvLayer<S> stem;
    BatchNormLayer<S> stem_bn;
    std::vector<BasicBlock3d<S>> blocks;
    Index feature_dim = 0;
    Index clip_length = 0;

    void init(const ModelConfig& config, Rng& rng) {
        const std::array<Index, 4> widths{config.scaled(64), config.scaled(128), config.scaled(256),
                                          config.scaled(config.ir_feature_dim)};
        stem.init(detail::conv_spec_3d(3, widths[0], 3, 7, 1, 2, 1, 3), rng);
        stem_bn.init(widths[0]);
        Index in = widths[0];
        blocks.clear();
        for (int stage = 0; stage < 4; ++stage) {
            for (Index b = 0; b < config.ir_stage_depths[std::size_t(stage)]; ++b) {
                const Index stride = (stage > 0 && b == 0) ? 2 : 1;
                BasicBlock3d<S> block;
                block.init(in, widths[std::size_t(stage)], stride, rng);
                blocks.push_back(std::move(block));
                in = widths[std::size_t(stage)];
            }
        }
        feature_dim = in;
        clip_length = config.clip_length;
    }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        if (x.shape().size() != 5 || x.shape()[1] != 3 || x.shape()[3] != kIrSize ||
            x.shape()[4] != kIrSize) {
            throw std::invalid_argument("ir module: expected input [N,3,T," + std::to_string(kIrSize) +
                                        "," + std::to_string(kIrSize) + "], got " +
                                        shape_str(x.shape()));
        }
        if (x.shape()[2] != clip_length) {
            throw std::invalid_argument("ir module: clip length " + std::to_string(x.shape()[2]) +
                                        " does not match configured T " + std::to_string(clip_length));
        }
        Tensor<S> h = relu(stem_bn.forward(stem.forward(x), training));
        for (auto& block : blocks) h = block.forward(h, training);
        return global_average_pool(h);
    }

    // Every factorized convolution, stem first, for the parameter-parity audit.
    std::vector<const FactorizedConvLayer<S>*> factorized_convs() const {
        std::vector<const FactorizedConvLayer<S>*> out{&stem};
        for (const auto& block : blocks) {
            out.push_back(&block.conv1);
            out.push_back(&block.conv2);
        }
        return out;
    }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        stem.register_into(set, prefix + ".stem.conv");
        stem_bn.register_into(set, prefix + ".stem.bn");
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            blocks[b].register_into(set, prefix + ".block" + std::to_string(b));
        }
    }
};

// Classification head: batch norm before every linear layer, ReLU between
// them, hidden widths 256w and 128w. The final layer starts at zero so an
// untrained network predicts the uniform distribution.
template <typename S>
struct MlpHead {
    BatchNormLayer<S> bn0;
    LinearLayer<S> fc1;
    BatchNormLayer<S> bn1;
    LinearLayer<S> fc2;
    BatchNormLayer<S> bn2;
    LinearLayer<S> fc3;
    bool use_dropout = false;
    double dropout_p = 0.5;

    void init(Index input_dim, const ModelConfig& config, Rng& rng) {
        use_dropout = config.mlp_dropout;
        const Index h1 = config.scaled(256);
        const Index h2 = config.scaled(128);
        bn0.init(input_dim);
        fc1.init(input_dim, h1, rng);
        bn1.init(h1);
        fc2.init(h1, h2, rng);
        bn2.init(h2);
        fc3.init(h2, config.class_count, rng, /*zero_init=*/true);
    }

    Tensor<S> forward(const Tensor<S>& x, bool training, Rng* dropout_rng) {
        auto pre = [&](const Tensor<S>& h, BatchNormLayer<S>& bn) {
            if (!use_dropout) return bn.forward(h, training);
            if (!training) return reshape(h, h.shape());
            if (!dropout_rng) {
                throw std::invalid_argument("mlp: dropout in training mode needs a random source");
            }
            return dropout(h, dropout_p, *dropout_rng, true);
        };
        Tensor<S> h = relu(fc1.forward(pre(x, bn0)));
        h = relu(fc2.forward(pre(h, bn1)));
        return fc3.forward(pre(h, bn2));
    }

    void register_into(ParamSet<S>& set, const std::string& prefix) {
        if (!use_dropout) bn0.register_into(set, prefix + ".bn0");
        fc1.register_into(set, prefix + ".fc1");
        if (!use_dropout) bn1.register_into(set, prefix + ".bn1");
        fc2.register_into(set, prefix + ".fc2");
        if (!use_dropout) bn2.register_into(set, prefix + ".bn2");
        fc3.register_into(set, prefix + ".fc3");
    }
};

// The end-to-end network: pose module, IR module and the fusion MLP, with
// pose-only / IR-only ablation variants and an optional logit-averaging
// fusion behind a flag.
template <typename S>
class FusionNetwork {
public:
    FusionNetwork(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
        config_.validate();
        Rng rng(derive_seed(init_seed, "model_init"));
        if (config_.mode != FusionMode::ir_only) {
            pose_.emplace();
            pose_->init(config_, rng);
        }
        if (config_.mode != FusionMode::pose_only) {
            ir_.emplace();
            ir_->init(config_, rng);
        }
        if (config_.logit_fusion && config_.mode == FusionMode::fusion) {
            pose_head_.emplace();
            pose_head_->init(config_.pose_features(), config_.class_count, rng, true);
            ir_head_.emplace();
            ir_head_->init(config_.ir_features(), config_.class_count, rng, true);
            mix_ir_ = Tensor<S>::full({1}, S(0.5), true);
            mix_pose_ = Tensor<S>::full({1}, S(0.5), true);
        } else {
            mlp_.init(config_.mlp_input_dim(), config_, rng);
        }
    }

    const ModelConfig& config() const { return config_; }

    Tensor<S> pose_features(const Tensor<S>& map, bool training) {
        if (!pose_) throw std::logic_error("pose module not present in this mode");
        return pose_->forward(map, training);
    }

    Tensor<S> ir_features(const Tensor<S>& clip, bool training) {
        if (!ir_) throw std::logic_error("ir module not present in this mode");
        return ir_->forward(clip, training);
    }

    // Classification head on an already-assembled feature vector.
    Tensor<S> head_logits(const Tensor<S>& features, bool training, Rng* dropout_rng = nullptr) {
        if (config_.logit_fusion && config_.mode == FusionMode::fusion) {
            throw std::logic_error("head_logits: the logit-averaging variant has no shared head");
        }
        return mlp_.forward(features, training, dropout_rng);
    }

    // Concatenation order is [ir; pose], fixed for checkpoint stability.
    Tensor<S> forward_logits(const Tensor<S>& map, const Tensor<S>& clip, bool training,
                             Rng* dropout_rng = nullptr) {
        switch (config_.mode) {
            case FusionMode::pose_only:
                return mlp_.forward(pose_features(map, training), training, dropout_rng);
            case FusionMode::ir_only:
                return mlp_.forward(ir_features(clip, training), training, dropout_rng);
            case FusionMode::fusion: {
                Tensor<S> i = ir_features(clip, training);
                Tensor<S> s = pose_features(map, training);
                if (config_.logit_fusion) {
                    Tensor<S> zi = broadcast_scale(ir_head_->forward(i), mix_ir_);
                    Tensor<S> zs = broadcast_scale(pose_head_->forward(s), mix_pose_);
                    return add(zi, zs);
                }
                return mlp_.forward(concat(i, s), training, dropout_rng);
            }
        }
        throw std::logic_error("unreachable");
    }

    Tensor<S> forward_probabilities(const Tensor<S>& map, const Tensor<S>& clip, bool training,
                                    Rng* dropout_rng = nullptr) {
        return softmax(forward_logits(map, clip, training, dropout_rng));
    }

    ParamSet<S> param_set() {
        ParamSet<S> set;
        if (pose_) pose_->register_into(set, "pose");
        if (ir_) ir_->register_into(set, "ir");
        if (config_.logit_fusion && config_.mode == FusionMode::fusion) {
            pose_head_->register_into(set, "pose_head");
            ir_head_->register_into(set, "ir_head");
            set.params.emplace_back("mix.ir", mix_ir_);
            set.params.emplace_back("mix.pose", mix_pose_);
        } else {
            mlp_.register_into(set, "mlp");
        }
        return set;
    }

    const IrBackbone<S>* ir_backbone() const { return ir_ ? &*ir_ : nullptr; }
    const PoseBackbone<S>* pose_backbone() const { return pose_ ? &*pose_ : nullptr; }

private:
    ModelConfig config_;
    std::optional<PoseBackbone<S>> pose_;
    std::optional<IrBackbone<S>> ir_;
    MlpHead<S> mlp_;
    std::optional<LinearLayer<S>> pose_head_;
    std::optional<LinearLayer<S>> ir_head_;
    Tensor<S> mix_pose_;
    Tensor<S> mix_ir_;
};

// Writes every parameter and running buffer plus the model config.
template <typename S>
void save_network(FusionNetwork<S>& net, const std::string& path,
                  nlohmann::json extra_meta = nlohmann::json::object()) {
    ArchiveWriter writer;
    auto set = net.param_set();
    for (auto& [name, tensor] : set.params) {
        writer.add(name, tensor.shape(), tensor.data());
    }
    for (auto& [name, buffer] : set.state) {
        writer.add(name, Shape{buffer->size()}, buffer->data());
    }
    extra_meta["model_config"] = net.config().to_json();
    writer.set_meta(std::move(extra_meta));
    writer.write(path);
}

// Loads parameters into an existing network; name or shape mismatches raise
// with a summary of the differences.
template <typename S>
void load_network(FusionNetwork<S>& net, const ArchiveReader& reader) {
    auto set = net.param_set();
    std::string missing;
    for (auto& [name, tensor] : set.params) {
        if (!reader.has(name)) {
            missing += (missing.empty() ? "" : ", ") + name;
        }
    }
    for (auto& [name, buffer] : set.state) {
        if (!reader.has(name)) {
            missing += (missing.empty() ? "" : ", ") + name;
        }
    }
    if (!missing.empty()) {
        throw std::runtime_error("checkpoint: archive is missing tensors: " + missing);
    }
    for (auto& [name, tensor] : set.params) {
        reader.read(name, tensor.shape(), tensor.data());
    }
    for (auto& [name, buffer] : set.state) {
        reader.read(name, Shape{buffer->size()}, buffer->data());
    }
}

template <typename S>
void load_network(FusionNetwork<S>& net, const std::string& path) {
    load_network(net, ArchiveReader(path));
}

}  // namespace fusion
