#pragma once

#include <chrono>
#include <cstdio>

#include "fusion/dataset.hpp"
#include "fusion/model.hpp"
#include "fusion/optim.hpp"

namespace fusion {

// Raised when training hits a non-finite loss; carries the diagnostic state.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class EvalSampling { random, midpoint };

struct TrainConfig {
    Index batch_size = 16;
    double learning_rate = 1e-4;  // constant, no schedule
    double clip_norm = 10.0;
    Index epochs = 50;
    std::uint64_t seed = 0;
    bool augment = true;
    bool deterministic = true;  // zeroes wall-time in reported artifacts
    EvalSampling eval_sampling = EvalSampling::midpoint;
    double validation_fraction = 0.05;

    void validate() const {
        if (batch_size < 2) {
            throw std::invalid_argument("train config: batch_size must be >= 2 for batch norm");
        }
        if (learning_rate < 0.0 || clip_norm <= 0.0 || epochs < 1) {
            throw std::invalid_argument("train config: hyperparameters must be positive");
        }
    }

    nlohmann::json to_json() const {
        return {{"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"clip_norm", clip_norm},
                {"epochs", epochs},
                {"seed", seed},
                {"augment", augment},
                {"deterministic", deterministic},
                {"eval_sampling", eval_sampling == EvalSampling::midpoint ? "midpoint" : "random"},
                {"validation_fraction", validation_fraction}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.batch_size = j.at("batch_size").get<Index>();
        c.learning_rate = j.at("learning_rate").get<double>();
        c.clip_norm = j.at("clip_norm").get<double>();
        c.epochs = j.at("epochs").get<Index>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.augment = j.at("augment").get<bool>();
        c.deterministic = j.at("deterministic").get<bool>();
        c.eval_sampling = j.at("eval_sampling").get<std::string>() == "random"
                              ? EvalSampling::random
                              : EvalSampling::midpoint;
        c.validation_fraction = j.at("validation_fraction").get<double>();
        return c;
    }
};

struct EpochReport {
    Index epoch = 0;
    double train_loss = 0.0;      // mean over the epoch's batches
    double train_accuracy = 0.0;  // running accuracy over the epoch's batches
    double validation_accuracy = 0.0;
    double wall_seconds = 0.0;
    std::string rng_checkpoint;  // derived epoch stream, hex
};

struct EvalResult {
    double accuracy = 0.0;
    std::vector<double> per_class_accuracy;
    std::vector<Index> confusion;  // row-major [true][predicted]
    Index total = 0;

    Index confusion_at(Index truth, Index predicted, Index classes) const {
        return confusion[static_cast<std::size_t>(truth * classes + predicted)];
    }
};

// Accuracy, per-class accuracy and the confusion matrix from paired labels.
inline EvalResult tabulate_predictions(const std::vector<Index>& truths,
                                       const std::vector<Index>& predictions, Index classes) {
    if (truths.size() != predictions.size() || truths.empty()) {
        throw std::invalid_argument("tabulate_predictions: label/prediction counts differ or empty");
    }
    EvalResult result;
    result.total = static_cast<Index>(truths.size());
    result.confusion.assign(static_cast<std::size_t>(classes * classes), 0);
    Index correct = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (truths[i] < 0 || truths[i] >= classes || predictions[i] < 0 ||
            predictions[i] >= classes) {
            throw std::invalid_argument("tabulate_predictions: class index out of range");
        }
        result.confusion[static_cast<std::size_t>(truths[i] * classes + predictions[i])]++;
        if (truths[i] == predictions[i]) ++correct;
    }
    result.accuracy = double(correct) / double(result.total);
    result.per_class_accuracy.assign(static_cast<std::size_t>(classes), 0.0);
    for (Index c = 0; c < classes; ++c) {
        Index row_total = 0;
        for (Index p = 0; p < classes; ++p) row_total += result.confusion_at(c, p, classes);
        if (row_total > 0) {
            result.per_class_accuracy[std::size_t(c)] =
                double(result.confusion_at(c, c, classes)) / double(row_total);
        }
    }
    return result;
}

// Per-sample preprocessing: skeleton normalize -> (rotate) -> encode -> resize,
// IR crop -> window-sample -> resize -> (flip) -> channel triplication. All
// augmentation randomness derives from the given seed; with augment off the
// result is a pure function of the sample.
struct PreprocessSettings {
    Index clip_length = 8;
    Index crop_offset = 20;
    bool augment = false;
    EvalSampling sampling = EvalSampling::midpoint;
    CoordinateExtrema extrema;
    bool need_map = true;
    bool need_clip = true;
};

struct PreparedSample {
    SkeletonMap map;
    IrClip clip;
};

inline PreparedSample prepare_sample(const LoadedSample& sample, const PreprocessSettings& settings,
                                     std::uint64_t aug_seed) {
    PreparedSample out;
    if (settings.need_map) {
        SkeletonSequence seq = normalize_sequence(sample.skeleton);
        if (settings.augment) {
            Rng rot_rng(derive_seed(aug_seed, "rotation"));
            seq = augment_rotation(seq, rot_rng);
        }
        out.map = resize_map(encode_skeleton_map(seq, settings.extrema), kMapSize, kMapSize);
    }
    if (settings.need_clip) {
        const CropBox box = compute_crop_box(sample.skeleton, settings.crop_offset);
        std::vector<Index> indices;
        if (settings.augment || settings.sampling == EvalSampling::random) {
            Rng win_rng(derive_seed(aug_seed, "windows"));
            indices = sample_windows(sample.ir.frame_count, settings.clip_length, win_rng);
        } else {
            indices = sample_windows_midpoint(sample.ir.frame_count, settings.clip_length);
        }
        IrSequence native = sample.ir.to_sequence();
        IrSequence selected;
        selected.frames.reserve(indices.size());
        for (Index i : indices) selected.frames.push_back(native.frames[static_cast<std::size_t>(i)]);
        IrSequence cropped = crop_sequence(selected, box);
        IrSequence resized = resize_frames(cropped, kIrSize);
        if (settings.augment) {
            Rng flip_rng(derive_seed(aug_seed, "hflip"));
            augment_hflip(resized.frames, flip_rng);
        }
        out.clip = to_three_channels(resized.frames, std::move(indices));
    }
    return out;
}

namespace detail {

template <typename S>
Tensor<S> batch_maps(const std::vector<PreparedSample>& batch) {
    const Index n = static_cast<Index>(batch.size());
    Buffer<S> data(n * 3 * kMapSize * kMapSize);
    Index at = 0;
    for (const auto& sample : batch) {
        for (const auto& channel : sample.map.channels) {
            for (Index r = 0; r < kMapSize; ++r) {
                for (Index c = 0; c < kMapSize; ++c) data[at++] = S(channel(r, c));
            }
        }
    }
    return Tensor<S>::from({n, 3, kMapSize, kMapSize}, std::move(data));
}

template <typename S>
Tensor<S> batch_clips(const std::vector<PreparedSample>& batch, Index t) {
    const Index n = static_cast<Index>(batch.size());
    const Index per = 3 * t * kIrSize * kIrSize;
    Buffer<S> data(n * per);
    Index at = 0;
    for (const auto& sample : batch) {
        if (sample.clip.length != t) {
            throw std::invalid_argument("batch_clips: clip length mismatch");
        }
        for (double v : sample.clip.data) data[at++] = S(v);
    }
    return Tensor<S>::from({n, 3, t, kIrSize, kIrSize}, std::move(data));
}

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace detail

// One trainer owns one network instance, its optimizer state and position in
// the epoch stream. Everything random derives from train_config.seed, so a
// checkpoint needs no engine state beyond the (epoch, batch) cursor.
template <typename S>
class Trainer {
public:
    Trainer(const ModelConfig& model_config, const TrainConfig& train_config,
            const std::vector<LoadedSample>* samples, std::vector<std::size_t> train_indices,
            std::vector<std::size_t> validation_indices, CoordinateExtrema extrema)
        : model_config_(model_config),
          train_config_(train_config),
          samples_(samples),
          train_indices_(std::move(train_indices)),
          validation_indices_(std::move(validation_indices)),
          extrema_(extrema),
          net_(model_config, train_config.seed) {
        model_config_.validate();
        train_config_.validate();
        if (!samples_ || samples_->empty()) {
            throw std::invalid_argument("trainer: no samples");
        }
        if (train_indices_.empty()) {
            throw std::invalid_argument("trainer: empty training split");
        }
        auto set = net_.param_set();
        params_ = set.tensors();
        adam_.learning_rate = S(train_config_.learning_rate);
        adam_.init(params_);
    }

    FusionNetwork<S>& network() { return net_; }
    const TrainConfig& train_config() const { return train_config_; }
    const ModelConfig& model_config() const { return model_config_; }
    Index epoch() const { return epoch_; }
    Index batch_cursor() const { return batch_; }
    bool mid_epoch() const { return batch_ > 0; }
    const std::vector<double>& loss_trace() const { return loss_trace_; }
    double max_post_clip_norm() const { return max_post_clip_norm_; }
    const std::vector<std::vector<Index>>& last_window_log() const { return window_log_; }
    const std::vector<std::size_t>& train_indices() const { return train_indices_; }
    const std::vector<std::size_t>& validation_indices() const { return validation_indices_; }

    // Trains until the current epoch completes (from scratch or after a
    // restore) and returns its report.
    EpochReport run_epoch() {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<std::size_t> order = epoch_order(epoch_);
        const Index batches = batch_count(order);
        if (batches == 0) {
            throw std::invalid_argument("trainer: training split smaller than one batch of 2");
        }
        if (batch_ == 0) {
            loss_sum_ = 0.0;
            correct_ = 0;
            seen_ = 0;
            window_log_.assign(samples_->size(), {});
        }
        while (batch_ < batches) {
            train_batch(order);
            ++batch_;
        }

        EpochReport report;
        report.epoch = epoch_;
        report.train_loss = loss_sum_ / double(batches);
        report.train_accuracy = seen_ ? double(correct_) / double(seen_) : 0.0;
        report.validation_accuracy =
            validation_indices_.empty() ? 0.0 : evaluate(validation_indices_).accuracy;
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        report.rng_checkpoint = detail::hex64(derive_seed(train_config_.seed, "shuffle", epoch_));
        ++epoch_;
        batch_ = 0;
        return report;
    }

    // Runs up to max_batches training batches inside the current epoch without
    // finalizing it; returns how many ran. Used around mid-epoch checkpoints.
    Index train_batches(Index max_batches) {
        const std::vector<std::size_t> order = epoch_order(epoch_);
        const Index batches = batch_count(order);
        if (batch_ == 0) {
            loss_sum_ = 0.0;
            correct_ = 0;
            seen_ = 0;
            window_log_.assign(samples_->size(), {});
        }
        Index ran = 0;
        while (batch_ < batches && ran < max_batches) {
            train_batch(order);
            ++batch_;
            ++ran;
        }
        return ran;
    }

    // Deterministic evaluation: frozen batch statistics, midpoint window
    // sampling (unless configured random), no augmentation, no side effects.
    EvalResult evaluate(const std::vector<std::size_t>& indices) {
        if (indices.empty()) {
            throw std::invalid_argument("evaluate: empty split");
        }
        PreprocessSettings settings = eval_settings();
        std::vector<Index> truths, predictions;
        truths.reserve(indices.size());
        predictions.reserve(indices.size());
        for (std::size_t at = 0; at < indices.size(); at += std::size_t(train_config_.batch_size)) {
            const std::size_t end =
                std::min(indices.size(), at + std::size_t(train_config_.batch_size));
            std::vector<PreparedSample> batch;
            for (std::size_t k = at; k < end; ++k) {
                const auto& sample = (*samples_)[indices[k]];
                batch.push_back(prepare_sample(sample, settings,
                                               derive_seed(train_config_.seed, "eval", indices[k])));
                truths.push_back(sample.label);
            }
            Tensor<S> logits = forward(batch, /*training=*/false);
            for (std::size_t k = 0; k < batch.size(); ++k) {
                predictions.push_back(argmax_row(logits, Index(k)));
            }
        }
        return tabulate_predictions(truths, predictions, model_config_.class_count);
    }

    void save_checkpoint(const std::string& path) {
        ArchiveWriter writer;
        auto set = net_.param_set();
        for (auto& [name, tensor] : set.params) writer.add(name, tensor.shape(), tensor.data());
        for (auto& [name, buffer] : set.state) writer.add(name, Shape{buffer->size()}, buffer->data());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            writer.add("adam.m." + set.params[i].first, params_[i].shape(),
                       adam_.first_moment[i].data());
            writer.add("adam.v." + set.params[i].first, params_[i].shape(),
                       adam_.second_moment[i].data());
        }
        nlohmann::json meta;
        meta["model_config"] = model_config_.to_json();
        meta["train_config"] = train_config_.to_json();
        meta["epoch"] = epoch_;
        meta["batch"] = batch_;
        meta["adam_step_count"] = adam_.step_count;
        meta["loss_sum"] = loss_sum_;
        meta["correct"] = correct_;
        meta["seen"] = seen_;
        meta["loss_trace"] = loss_trace_;
        meta["train_indices"] = train_indices_;
        meta["validation_indices"] = validation_indices_;
        meta["extrema"] = {{"c_min", extrema_.c_min}, {"c_max", extrema_.c_max}};
        writer.set_meta(std::move(meta));
        writer.write(path);
    }

    static Trainer restore(const std::string& path, const std::vector<LoadedSample>* samples) {
        ArchiveReader reader(path);
        const auto& meta = reader.meta();
        ModelConfig model_config = ModelConfig::from_json(meta.at("model_config"));
        TrainConfig train_config = TrainConfig::from_json(meta.at("train_config"));
        CoordinateExtrema extrema{meta.at("extrema").at("c_min").get<double>(),
                                  meta.at("extrema").at("c_max").get<double>()};
        Trainer trainer(model_config, train_config, samples,
                        meta.at("train_indices").get<std::vector<std::size_t>>(),
                        meta.at("validation_indices").get<std::vector<std::size_t>>(), extrema);
        load_network(trainer.net_, reader);
        auto set = trainer.net_.param_set();
        for (std::size_t i = 0; i < trainer.params_.size(); ++i) {
            reader.read("adam.m." + set.params[i].first, trainer.params_[i].shape(),
                        trainer.adam_.first_moment[i].data());
            reader.read("adam.v." + set.params[i].first, trainer.params_[i].shape(),
                        trainer.adam_.second_moment[i].data());
        }
        trainer.adam_.step_count = meta.at("adam_step_count").get<std::int64_t>();
        trainer.epoch_ = meta.at("epoch").get<Index>();
        trainer.batch_ = meta.at("batch").get<Index>();
        trainer.loss_sum_ = meta.at("loss_sum").get<double>();
        trainer.correct_ = meta.at("correct").get<Index>();
        trainer.seen_ = meta.at("seen").get<Index>();
        trainer.loss_trace_ = meta.at("loss_trace").get<std::vector<double>>();
        trainer.window_log_.assign(samples->size(), {});
        return trainer;
    }

    PreprocessSettings train_settings() const {
        PreprocessSettings settings;
        settings.clip_length = model_config_.clip_length;
        settings.augment = train_config_.augment;
        settings.sampling = EvalSampling::random;
        settings.extrema = extrema_;
        settings.need_map = model_config_.mode != FusionMode::ir_only;
        settings.need_clip = model_config_.mode != FusionMode::pose_only;
        return settings;
    }

    PreprocessSettings eval_settings() const {
        PreprocessSettings settings = train_settings();
        settings.augment = false;
        settings.sampling = train_config_.eval_sampling;
        return settings;
    }

    std::uint64_t augmentation_seed(Index epoch, std::size_t sample_index) const {
        return derive_seed(train_config_.seed, "augment", std::uint64_t(epoch),
                           std::uint64_t(sample_index));
    }

private:
    std::vector<std::size_t> epoch_order(Index epoch) const {
        std::vector<std::size_t> order = train_indices_;
        Rng rng(derive_seed(train_config_.seed, "shuffle", std::uint64_t(epoch)));
        rng.shuffle(order);
        return order;
    }

    Index batch_count(const std::vector<std::size_t>& order) const {
        Index full = Index(order.size()) / train_config_.batch_size;
        const Index rest = Index(order.size()) % train_config_.batch_size;
        if (rest >= 2) ++full;  // batch norm needs at least two samples
        return full;
    }

    static Index argmax_row(const Tensor<S>& logits, Index row) {
        const Index classes = logits.shape()[1];
        Index best = 0;
        for (Index c = 1; c < classes; ++c) {
            if (logits.value()[row * classes + c] > logits.value()[row * classes + best]) best = c;
        }
        return best;
    }

    Tensor<S> forward(const std::vector<PreparedSample>& batch, bool training) {
        Tensor<S> map, clip;
        if (model_config_.mode != FusionMode::ir_only) map = detail::batch_maps<S>(batch);
        if (model_config_.mode != FusionMode::pose_only) {
            clip = detail::batch_clips<S>(batch, model_config_.clip_length);
        }
        Rng dropout_rng(derive_seed(train_config_.seed, "dropout", std::uint64_t(epoch_),
                                    std::uint64_t(batch_)));
        return net_.forward_logits(map, clip, training, &dropout_rng);
    }

    void train_batch(const std::vector<std::size_t>& order) {
        const std::size_t begin = std::size_t(batch_ * train_config_.batch_size);
        const std::size_t end = std::min(order.size(), begin + std::size_t(train_config_.batch_size));
        const PreprocessSettings settings = train_settings();

        std::vector<PreparedSample> batch;
        std::vector<Index> labels;
        std::vector<std::string> ids;
        batch.reserve(end - begin);
        for (std::size_t k = begin; k < end; ++k) {
            const std::size_t sample_index = order[k];
            const auto& sample = (*samples_)[sample_index];
            batch.push_back(prepare_sample(sample, settings, augmentation_seed(epoch_, sample_index)));
            labels.push_back(sample.label);
            ids.push_back(sample.id);
            if (settings.need_clip) window_log_[sample_index] = batch.back().clip.source_indices;
        }

        zero_grad(params_);
        Tensor<S> logits = forward(batch, /*training=*/true);
        Tensor<S> loss = softmax_cross_entropy(logits, labels);
        const double loss_value = double(loss.value()[0]);

        for (std::size_t k = 0; k < labels.size(); ++k) {
            if (argmax_row(logits, Index(k)) == labels[k]) ++correct_;
            ++seen_;
        }

        backward(loss, /*release_graph=*/true);
        const S grad_norm = global_grad_norm(params_);
        if (!std::isfinite(loss_value) || !std::isfinite(double(grad_norm))) {
            std::string id_list;
            for (const auto& id : ids) id_list += (id_list.empty() ? "" : ", ") + id;
            throw NumericError("training aborted: non-finite loss " + std::to_string(loss_value) +
                               " at epoch " + std::to_string(epoch_) + " batch " +
                               std::to_string(batch_) + " (gradient norm " +
                               std::to_string(double(grad_norm)) + ", samples: " + id_list + ")");
        }
        clip_gradients(params_, S(train_config_.clip_norm));
        max_post_clip_norm_ =
            std::max(max_post_clip_norm_, double(global_grad_norm(params_)));
        adam_step(adam_, params_);
        loss_sum_ += loss_value;
        loss_trace_.push_back(loss_value);
    }

    ModelConfig model_config_;
    TrainConfig train_config_;
    const std::vector<LoadedSample>* samples_;
    std::vector<std::size_t> train_indices_;
    std::vector<std::size_t> validation_indices_;
    CoordinateExtrema extrema_;
    FusionNetwork<S> net_;
    std::vector<Tensor<S>> params_;
    AdamState<S> adam_;

    Index epoch_ = 0;
    Index batch_ = 0;
    double loss_sum_ = 0.0;
    Index correct_ = 0;
    Index seen_ = 0;
    double max_post_clip_norm_ = 0.0;
    std::vector<double> loss_trace_;
    std::vector<std::vector<Index>> window_log_;  // per dataset sample, last epoch's indices
};

// One training run per (mode, T, seed) cell on a shared split, reported in the
// shape of the sequence-length ablation table: rows are modes, columns are T.
struct AblationCell {
    FusionMode mode;
    Index clip_length;
    std::uint64_t seed;
    double test_accuracy;
    double final_train_loss;
    Index pose_features;
    Index ir_features;
};

struct AblationReport {
    std::vector<AblationCell> cells;
    std::vector<Index> clip_lengths;
    std::vector<FusionMode> modes;

    double mean_accuracy(FusionMode mode, Index t) const {
        double total = 0.0;
        int count = 0;
        for (const auto& cell : cells) {
            if (cell.mode == mode && cell.clip_length == t) {
                total += cell.test_accuracy;
                ++count;
            }
        }
        return count ? total / count : 0.0;
    }

    std::string table() const {
        std::string out = "method";
        for (Index t : clip_lengths) out += "\tT=" + std::to_string(t);
        out += "\n";
        for (FusionMode mode : modes) {
            out += to_string(mode);
            for (Index t : clip_lengths) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "\t%.4f", mean_accuracy(mode, t));
                out += buf;
            }
            out += "\n";
        }
        return out;
    }
};

template <typename S>
AblationReport run_ablation(const std::vector<LoadedSample>& samples,
                            const std::vector<std::size_t>& train_indices,
                            const std::vector<std::size_t>& test_indices,
                            const CoordinateExtrema& extrema, ModelConfig model_config,
                            TrainConfig train_config, const std::vector<FusionMode>& modes,
                            const std::vector<Index>& clip_lengths,
                            const std::vector<std::uint64_t>& seeds) {
    AblationReport report;
    report.modes = modes;
    report.clip_lengths = clip_lengths;
    for (FusionMode mode : modes) {
        for (Index t : clip_lengths) {
            for (std::uint64_t seed : seeds) {
                ModelConfig mc = model_config;
                mc.mode = mode;
                mc.clip_length = t;
                TrainConfig tc = train_config;
                tc.seed = seed;
                Trainer<S> trainer(mc, tc, &samples, train_indices, {}, extrema);
                double final_loss = 0.0;
                for (Index e = 0; e < tc.epochs; ++e) {
                    final_loss = trainer.run_epoch().train_loss;
                }
                AblationCell cell;
                cell.mode = mode;
                cell.clip_length = t;
                cell.seed = seed;
                cell.test_accuracy = trainer.evaluate(test_indices).accuracy;
                cell.final_train_loss = final_loss;
                cell.pose_features = mode == FusionMode::ir_only ? 0 : mc.pose_features();
                cell.ir_features = mode == FusionMode::pose_only ? 0 : mc.ir_features();
                report.cells.push_back(cell);
            }
        }
    }
    return report;
}

}  // namespace fusion
