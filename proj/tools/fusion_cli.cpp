#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fusion/config.hpp"
#include "fusion/train.hpp"

namespace fs = std::filesystem;
using namespace fusion;

namespace {

constexpr const char* kCodeVersion = "fusion 0.1.0";

// Raised for broken inputs (missing files, bad data); mapped to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out = true) {
    const char* env_config = std::getenv("FUSION_CONFIG");
    if (env_config) args.config_path = env_config;
    cmd->add_option("--config", args.config_path, "plain-text key=value configuration file");
    cmd->add_option("--set", args.overrides, "config override, key=value (repeatable)");
    cmd->add_option("--seed", args.seed, "root seed; all randomness derives from it");
    if (with_out) cmd->add_option("--out", args.out_dir, "output directory")->required();
    cmd->add_flag("--deterministic", args.deterministic,
                  "reproducible artifacts (wall times written as 0)");
}

Config build_config(const CommonArgs& args) {
    Config config = Config::load(args.config_path);
    for (const auto& kv : args.overrides) config.apply_override(kv);
    return config;
}

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) {
        throw DataError("cannot create output directory " + out_dir);
    }
}

void write_run_manifest(const std::string& out_dir, const std::string& verb, const Config& config,
                        std::uint64_t seed, const std::vector<std::string>& argv) {
    nlohmann::json doc;
    doc["verb"] = verb;
    doc["seed"] = seed;
    doc["code_version"] = kCodeVersion;
    doc["config"] = config.to_json();
    doc["argv"] = argv;
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    out << doc.dump(2) << "\n";
}

DatasetManifest load_dataset(const std::string& data_dir) {
    const fs::path manifest_path = fs::path(data_dir) / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw DataError("no dataset manifest at " + manifest_path.string());
    }
    try {
        return DatasetManifest::load(manifest_path.string());
    } catch (const std::exception& e) {
        throw DataError(std::string("failed to load dataset manifest: ") + e.what());
    }
}

struct PrepInfo {
    std::string split_kind;
    std::uint64_t seed = 0;
    CoordinateExtrema extrema;
    std::vector<std::string> train_ids, validation_ids, test_ids;

    void save(const std::string& path) const {
        nlohmann::json doc;
        doc["split"] = split_kind;
        doc["seed"] = seed;
        doc["extrema"] = {{"c_min", extrema.c_min}, {"c_max", extrema.c_max}};
        doc["train_split_id"] = split_kind + "@" + std::to_string(seed);
        doc["train_ids"] = train_ids;
        doc["validation_ids"] = validation_ids;
        doc["test_ids"] = test_ids;
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path);
        out << doc.dump(2) << "\n";
    }

    static PrepInfo load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open prep file " + path);
        nlohmann::json doc = nlohmann::json::parse(in);
        PrepInfo info;
        info.split_kind = doc.at("split").get<std::string>();
        info.seed = doc.at("seed").get<std::uint64_t>();
        info.extrema.c_min = doc.at("extrema").at("c_min").get<double>();
        info.extrema.c_max = doc.at("extrema").at("c_max").get<double>();
        info.train_ids = doc.at("train_ids").get<std::vector<std::string>>();
        info.validation_ids = doc.at("validation_ids").get<std::vector<std::string>>();
        info.test_ids = doc.at("test_ids").get<std::vector<std::string>>();
        return info;
    }
};

std::vector<std::size_t> ids_to_indices(const DatasetManifest& manifest,
                                        const std::vector<std::string>& ids) {
    std::map<std::string, std::size_t> lookup;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) lookup[manifest.samples[i].id] = i;
    std::vector<std::size_t> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        auto it = lookup.find(id);
        if (it == lookup.end()) throw DataError("sample '" + id + "' is not in the dataset manifest");
        out.push_back(it->second);
    }
    return out;
}

ModelConfig model_config_from(const Config& config, const DatasetManifest& manifest) {
    ModelConfig mc;
    mc.class_count = manifest.class_count > 0 ? manifest.class_count : config.integer("model.class_count");
    mc.width_multiplier = config.number("model.width_multiplier");
    mc.clip_length = config.integer("model.clip_length");
    mc.mode = fusion_mode_from_string(config.get("model.mode"));
    mc.pose_feature_dim = config.integer("model.pose_feature_dim");
    mc.ir_feature_dim = config.integer("model.ir_feature_dim");
    mc.logit_fusion = config.flag("model.logit_fusion");
    mc.mlp_dropout = config.flag("model.mlp_dropout");
    return mc;
}

TrainConfig train_config_from(const Config& config, std::uint64_t seed, bool deterministic) {
    TrainConfig tc;
    tc.batch_size = config.integer("train.batch_size");
    tc.learning_rate = config.number("train.learning_rate");
    tc.clip_norm = config.number("train.clip_norm");
    tc.epochs = config.integer("train.epochs");
    tc.seed = seed;
    tc.augment = config.flag("train.augment");
    tc.deterministic = deterministic;
    tc.eval_sampling = config.get("train.eval_sampling") == "random" ? EvalSampling::random
                                                                     : EvalSampling::midpoint;
    tc.validation_fraction = config.number("split.validation_fraction");
    return tc;
}

std::vector<LoadedSample> load_all_samples(const DatasetManifest& manifest) {
    try {
        return load_samples(manifest);
    } catch (const std::exception& e) {
        throw DataError(std::string("failed to load samples: ") + e.what());
    }
}

void append_epoch_csv(const std::string& path, const EpochReport& report, bool deterministic) {
    const bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    if (fresh) out << "epoch,train_loss,train_acc,val_acc,seconds,rng\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.3f,%s\n",
                  static_cast<long long>(report.epoch), report.train_loss, report.train_accuracy,
                  report.validation_accuracy, deterministic ? 0.0 : report.wall_seconds,
                  report.rng_checkpoint.c_str());
    out << buf;
}

void append_windows_csv(const std::string& path, Index epoch, const DatasetManifest& manifest,
                        const std::vector<std::vector<Index>>& log) {
    const bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    if (fresh) out << "epoch,sample,indices\n";
    for (std::size_t i = 0; i < log.size(); ++i) {
        if (log[i].empty()) continue;
        out << epoch << "," << manifest.samples[i].id << ",";
        for (std::size_t k = 0; k < log[i].size(); ++k) out << (k ? " " : "") << log[i][k];
        out << "\n";
    }
}

void write_eval_artifacts(const std::string& out_dir, const EvalResult& result, Index classes,
                          const std::string& split_name) {
    nlohmann::json doc;
    doc["split"] = split_name;
    doc["accuracy"] = result.accuracy;
    doc["total"] = result.total;
    doc["per_class_accuracy"] = result.per_class_accuracy;
    std::ofstream metrics(fs::path(out_dir) / "metrics.json");
    metrics << doc.dump(2) << "\n";

    std::ofstream confusion(fs::path(out_dir) / "confusion.csv");
    for (Index truth = 0; truth < classes; ++truth) {
        for (Index predicted = 0; predicted < classes; ++predicted) {
            confusion << result.confusion_at(truth, predicted, classes)
                      << (predicted + 1 < classes ? "," : "\n");
        }
    }
}

int cmd_synth(const CommonArgs& args, const Config& config) {
    ensure_out_dir(args.out_dir);
    SynthConfig synth;
    synth.classes = int(config.integer("dataset.classes"));
    synth.per_class = int(config.integer("dataset.per_class"));
    synth.seed = args.seed;
    synth.out_dir = args.out_dir;
    synth.ir_width = config.integer("dataset.ir_width");
    synth.ir_height = config.integer("dataset.ir_height");
    synth.min_frames = config.integer("dataset.min_frames");
    synth.max_frames = config.integer("dataset.max_frames");
    synth.bit_depth = int(config.integer("dataset.bit_depth"));
    const auto manifest = generate_synthetic_dataset(synth);
    std::printf("wrote %zu samples across %d classes to %s\n", manifest.samples.size(),
                manifest.class_count, args.out_dir.c_str());
    return 0;
}

int cmd_prep(const CommonArgs& args, const Config& config, const std::string& data_dir) {
    ensure_out_dir(args.out_dir);
    const auto manifest = load_dataset(data_dir);

    SplitAssignment split;
    const std::string kind = config.get("split.kind");
    if (kind == "cv") {
        split = split_cross_view(manifest);
    } else if (kind == "cs") {
        std::vector<int> subjects;
        for (Index v : config.integer_list("split.cs_train_subjects")) subjects.push_back(int(v));
        split = split_cross_subject(manifest, subjects);
    } else {
        throw UsageError("split.kind must be cv or cs, got '" + kind + "'");
    }
    if (split.train.empty() || split.test.empty()) {
        throw DataError("split '" + kind + "' left an empty side (train " +
                        std::to_string(split.train.size()) + ", test " +
                        std::to_string(split.test.size()) + ")");
    }

    auto [train_rest, validation] =
        validation_split(split.train, config.number("split.validation_fraction"), args.seed);

    // dataset-wise extrema over the normalized training split only
    std::vector<SkeletonSequence> train_sequences;
    for (std::size_t i : train_rest) {
        train_sequences.push_back(
            normalize_sequence(parse_skeleton_file(manifest.samples[i].skeleton_path)));
    }
    PrepInfo info;
    info.split_kind = kind;
    info.seed = args.seed;
    info.extrema = compute_extrema(train_sequences);
    for (std::size_t i : train_rest) info.train_ids.push_back(manifest.samples[i].id);
    for (std::size_t i : validation) info.validation_ids.push_back(manifest.samples[i].id);
    for (std::size_t i : split.test) info.test_ids.push_back(manifest.samples[i].id);
    info.save((fs::path(args.out_dir) / "prep.json").string());
    save_extrema(info.extrema, info.split_kind + "@" + std::to_string(args.seed),
                 (fs::path(args.out_dir) / "extrema.json").string());
    std::printf("prep: %zu train, %zu validation, %zu test; extrema [%g, %g]\n",
                info.train_ids.size(), info.validation_ids.size(), info.test_ids.size(),
                info.extrema.c_min, info.extrema.c_max);
    return 0;
}

int cmd_train(const CommonArgs& args, const Config& config, const std::string& data_dir,
              const std::string& prep_path) {
    ensure_out_dir(args.out_dir);
    const auto manifest = load_dataset(data_dir);
    const auto prep = PrepInfo::load(prep_path);
    const auto samples = load_all_samples(manifest);

    ModelConfig mc = model_config_from(config, manifest);
    TrainConfig tc = train_config_from(config, args.seed, args.deterministic);

    Trainer<float> trainer(mc, tc, &samples, ids_to_indices(manifest, prep.train_ids),
                           ids_to_indices(manifest, prep.validation_ids), prep.extrema);

    const std::string epochs_csv = (fs::path(args.out_dir) / "epochs.csv").string();
    const std::string windows_csv = (fs::path(args.out_dir) / "windows.csv").string();
    std::error_code ec;
    fs::remove(epochs_csv, ec);
    fs::remove(windows_csv, ec);

    const double early_stop = config.number("train.early_stop_accuracy");
    double best_validation = -1.0;
    EpochReport last;
    Index epochs_run = 0;
    bool early_stopped = false;
    for (Index e = 0; e < tc.epochs; ++e) {
        last = trainer.run_epoch();
        ++epochs_run;
        append_epoch_csv(epochs_csv, last, tc.deterministic);
        append_windows_csv(windows_csv, last.epoch, manifest, trainer.last_window_log());
        if (!prep.validation_ids.empty() && last.validation_accuracy > best_validation) {
            best_validation = last.validation_accuracy;
            trainer.save_checkpoint((fs::path(args.out_dir) / "best.ckpt").string());
        }
        std::printf("epoch %lld: loss %.4f, train acc %.4f, val acc %.4f\n",
                    static_cast<long long>(last.epoch), last.train_loss, last.train_accuracy,
                    last.validation_accuracy);
        std::fflush(stdout);
        if (last.train_accuracy >= early_stop) {
            early_stopped = true;
            break;
        }
    }
    trainer.save_checkpoint((fs::path(args.out_dir) / "final.ckpt").string());

    nlohmann::json metrics;
    metrics["epochs_run"] = epochs_run;
    metrics["early_stopped"] = early_stopped;
    metrics["final_train_loss"] = last.train_loss;
    metrics["final_train_accuracy"] = last.train_accuracy;
    metrics["final_validation_accuracy"] = last.validation_accuracy;
    metrics["best_validation_accuracy"] = best_validation;
    std::ofstream out(fs::path(args.out_dir) / "metrics.json");
    out << metrics.dump(2) << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& data_dir, const std::string& prep_path,
             const std::string& checkpoint, const std::string& split_name) {
    ensure_out_dir(args.out_dir);
    const auto manifest = load_dataset(data_dir);
    const auto prep = PrepInfo::load(prep_path);
    const auto samples = load_all_samples(manifest);

    const std::vector<std::string>* ids = nullptr;
    if (split_name == "test") {
        ids = &prep.test_ids;
    } else if (split_name == "validation") {
        ids = &prep.validation_ids;
    } else if (split_name == "train") {
        ids = &prep.train_ids;
    } else {
        throw UsageError("--split must be test, validation or train");
    }
    if (ids->empty()) throw DataError("split '" + split_name + "' is empty");

    auto trainer = Trainer<float>::restore(checkpoint, &samples);
    const auto result = trainer.evaluate(ids_to_indices(manifest, *ids));
    write_eval_artifacts(args.out_dir, result, trainer.model_config().class_count, split_name);
    std::printf("%s accuracy: %.4f over %lld samples\n", split_name.c_str(), result.accuracy,
                static_cast<long long>(result.total));
    return 0;
}

int cmd_ablate(const CommonArgs& args, const Config& config, const std::string& data_dir,
               const std::string& prep_path) {
    ensure_out_dir(args.out_dir);
    const auto manifest = load_dataset(data_dir);
    const auto prep = PrepInfo::load(prep_path);
    const auto samples = load_all_samples(manifest);

    std::vector<FusionMode> modes;
    for (const auto& name : config.list("ablate.modes")) modes.push_back(fusion_mode_from_string(name));
    const std::vector<Index> clip_lengths = config.integer_list("ablate.T");
    std::vector<std::uint64_t> seeds;
    for (Index k = 0; k < config.integer("ablate.seeds"); ++k) {
        seeds.push_back(derive_seed(args.seed, "ablate", std::uint64_t(k)));
    }

    ModelConfig mc = model_config_from(config, manifest);
    mc.width_multiplier = config.number("ablate.width_multiplier");
    TrainConfig tc = train_config_from(config, args.seed, args.deterministic);
    tc.epochs = config.integer("ablate.epochs");

    // validation is folded back into training here; ablation reports test accuracy
    std::vector<std::string> train_ids = prep.train_ids;
    train_ids.insert(train_ids.end(), prep.validation_ids.begin(), prep.validation_ids.end());

    const auto report =
        run_ablation<float>(samples, ids_to_indices(manifest, train_ids),
                            ids_to_indices(manifest, prep.test_ids), prep.extrema, mc, tc, modes,
                            clip_lengths, seeds);

    std::ofstream csv(fs::path(args.out_dir) / "ablation.csv");
    csv << "mode,T,seed,test_accuracy,final_train_loss,pose_features,ir_features\n";
    for (const auto& cell : report.cells) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s,%lld,%llu,%.9g,%.9g,%lld,%lld\n", to_string(cell.mode),
                      static_cast<long long>(cell.clip_length),
                      static_cast<unsigned long long>(cell.seed), cell.test_accuracy,
                      cell.final_train_loss, static_cast<long long>(cell.pose_features),
                      static_cast<long long>(cell.ir_features));
        csv << buf;
    }
    std::ofstream table(fs::path(args.out_dir) / "table.txt");
    table << report.table();
    std::printf("%s", report.table().c_str());
    return 0;
}

int cmd_inspect(const CommonArgs& args, const Config& config, const std::string& data_dir,
                const std::string& sample_id, const std::string& prep_path, Index epoch) {
    ensure_out_dir(args.out_dir);
    const auto manifest = load_dataset(data_dir);

    std::size_t sample_index = manifest.samples.size();
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        if (manifest.samples[i].id == sample_id) {
            sample_index = i;
            break;
        }
    }
    if (sample_index == manifest.samples.size()) {
        throw DataError("sample '" + sample_id + "' not found in " + data_dir);
    }
    const auto& entry = manifest.samples[sample_index];
    SkeletonSequence skeleton = parse_skeleton_file(entry.skeleton_path);
    IrRaw ir = load_ir(entry.ir_path);

    CoordinateExtrema extrema;
    if (!prep_path.empty()) {
        extrema = PrepInfo::load(prep_path).extrema;
    } else {
        extrema = compute_extrema({normalize_sequence(skeleton)});
    }

    // skeleton map, before and after resizing
    const SkeletonMap map = encode_skeleton_map(normalize_sequence(skeleton), extrema);
    const SkeletonMap resized = resize_map(map, kMapSize, kMapSize);
    save_png_rgb((fs::path(args.out_dir) / "skeleton_map.png").string(), resized.channels[0],
                 resized.channels[1], resized.channels[2]);

    // crop-box overlay on first, middle and last frames
    const CropBox box = compute_crop_box(skeleton, 20);
    IrSequence frames = ir.to_sequence();
    for (Index f : {Index(0), ir.frame_count / 2, ir.frame_count - 1}) {
        Eigen::MatrixXd gray = frames.frames[std::size_t(f)];
        Eigen::MatrixXd red = gray;
        const Index x0 = std::clamp<Index>(box.x_min, 0, gray.cols() - 1);
        const Index x1 = std::clamp<Index>(box.x_max - 1, 0, gray.cols() - 1);
        const Index y0 = std::clamp<Index>(box.y_min, 0, gray.rows() - 1);
        const Index y1 = std::clamp<Index>(box.y_max - 1, 0, gray.rows() - 1);
        for (Index x = x0; x <= x1; ++x) red(y0, x) = red(y1, x) = 1.0;
        for (Index y = y0; y <= y1; ++y) red(y, x0) = red(y, x1) = 1.0;
        save_png_rgb((fs::path(args.out_dir) / ("crop_frame_" + std::to_string(f) + ".png")).string(),
                     red, gray, gray);
    }

    // window indices under the training derivation for this (seed, epoch)
    const Index t = config.integer("model.clip_length");
    const std::uint64_t aug_seed =
        derive_seed(args.seed, "augment", std::uint64_t(epoch), std::uint64_t(sample_index));
    Rng win_rng(derive_seed(aug_seed, "windows"));
    nlohmann::json windows;
    windows["sample"] = sample_id;
    windows["epoch"] = epoch;
    windows["seed"] = args.seed;
    windows["T"] = t;
    windows["random"] = sample_windows(ir.frame_count, t, win_rng);
    windows["midpoint"] = sample_windows_midpoint(ir.frame_count, t);
    windows["crop_box"] = {{"x_min", box.x_min}, {"y_min", box.y_min}, {"x_max", box.x_max},
                           {"y_max", box.y_max}};
    std::ofstream out(fs::path(args.out_dir) / "windows.json");
    out << windows.dump(2) << "\n";
    std::printf("inspect: wrote skeleton_map.png, crop overlays and windows.json to %s\n",
                args.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FUSION: skeleton + infrared action recognition at desk scale"};
    app.require_subcommand(1);

    CommonArgs synth_args, prep_args, train_args, eval_args, ablate_args, inspect_args;
    std::string data_dir, prep_path, checkpoint, sample_id, split_name = "test";
    std::string mode_flag, t_flag, epochs_flag;
    Index inspect_epoch = 0;

    std::string classes_flag, per_class_flag;
    auto* synth = app.add_subcommand("synth", "generate the synthetic NTU-format dataset");
    add_common(synth, synth_args);
    synth->add_option("--classes", classes_flag, "number of action classes (2..8)");
    synth->add_option("--per-class", per_class_flag, "samples per class");

    auto* prep = app.add_subcommand("prep", "decode names, split, compute and persist extrema");
    add_common(prep, prep_args);
    prep->add_option("--data", data_dir, "dataset directory (holds manifest.json)")->required();

    auto* train = app.add_subcommand("train", "train a network on a prepared split");
    add_common(train, train_args);
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--prep", prep_path, "prep.json from the prep step")->required();
    train->add_option("--mode", mode_flag, "fusion | pose_only | ir_only");
    train->add_option("--T", t_flag, "IR clip length");
    train->add_option("--epochs", epochs_flag, "epoch budget");

    auto* evalc = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    add_common(evalc, eval_args);
    evalc->add_option("--data", data_dir, "dataset directory")->required();
    evalc->add_option("--prep", prep_path, "prep.json from the prep step")->required();
    evalc->add_option("--checkpoint", checkpoint, "trainer checkpoint")->required();
    evalc->add_option("--split", split_name, "test | validation | train");

    auto* ablate = app.add_subcommand("ablate", "mode x T ablation grid");
    add_common(ablate, ablate_args);
    ablate->add_option("--data", data_dir, "dataset directory")->required();
    ablate->add_option("--prep", prep_path, "prep.json from the prep step")->required();
    ablate->add_option("--T", t_flag, "comma list of clip lengths");
    ablate->add_option("--modes", mode_flag, "comma list of modes");

    auto* inspect = app.add_subcommand("inspect", "debug artifacts for one sample");
    add_common(inspect, inspect_args);
    inspect->add_option("--data", data_dir, "dataset directory")->required();
    inspect->add_option("--sample", sample_id, "sample id, S###C###P###R###A###")->required();
    inspect->add_option("--prep", prep_path, "optional prep.json for dataset extrema");
    inspect->add_option("--T", t_flag, "clip length for the window export");
    inspect->add_option("--epoch", inspect_epoch, "epoch whose training draw to reproduce");

    std::vector<std::string> argv_copy(argv, argv + argc);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints the usage text on the error stream
        return 1;
    }

    try {
        if (synth->parsed()) {
            Config config = build_config(synth_args);
            if (!classes_flag.empty()) config.set("dataset.classes", classes_flag);
            if (!per_class_flag.empty()) config.set("dataset.per_class", per_class_flag);
            write_run_manifest(synth_args.out_dir.empty() ? "." : synth_args.out_dir, "synth", config,
                               synth_args.seed, argv_copy);
            return cmd_synth(synth_args, config);
        }
        if (prep->parsed()) {
            Config config = build_config(prep_args);
            write_run_manifest(prep_args.out_dir, "prep", config, prep_args.seed, argv_copy);
            return cmd_prep(prep_args, config, data_dir);
        }
        if (train->parsed()) {
            Config config = build_config(train_args);
            if (!mode_flag.empty()) config.set("model.mode", mode_flag);
            if (!t_flag.empty()) config.set("model.clip_length", t_flag);
            if (!epochs_flag.empty()) config.set("train.epochs", epochs_flag);
            write_run_manifest(train_args.out_dir, "train", config, train_args.seed, argv_copy);
            return cmd_train(train_args, config, data_dir, prep_path);
        }
        if (evalc->parsed()) {
            Config config = build_config(eval_args);
            write_run_manifest(eval_args.out_dir, "eval", config, eval_args.seed, argv_copy);
            return cmd_eval(eval_args, data_dir, prep_path, checkpoint, split_name);
        }
        if (ablate->parsed()) {
            Config config = build_config(ablate_args);
            if (!t_flag.empty()) config.set("ablate.T", t_flag);
            if (!mode_flag.empty()) config.set("ablate.modes", mode_flag);
            write_run_manifest(ablate_args.out_dir, "ablate", config, ablate_args.seed, argv_copy);
            return cmd_ablate(ablate_args, config, data_dir, prep_path);
        }
        if (inspect->parsed()) {
            Config config = build_config(inspect_args);
            if (!t_flag.empty()) config.set("model.clip_length", t_flag);
            write_run_manifest(inspect_args.out_dir, "inspect", config, inspect_args.seed, argv_copy);
            return cmd_inspect(inspect_args, config, data_dir, sample_id, prep_path, inspect_epoch);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
