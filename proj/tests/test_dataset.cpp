#include <doctest.h>

#include <fstream>
#include <set>

#include "fusion/dataset.hpp"
#include "fusion/infrared.hpp"
#include "testutil.hpp"

using namespace fusion;

TEST_CASE("sample name codec: decode fields and encode round trip") {
    auto meta = decode_sample_name("S001C002P003R002A045");
    CHECK(meta.setup_id == 1);
    CHECK(meta.camera_id == 2);
    CHECK(meta.performer_id == 3);
    CHECK(meta.replication_id == 2);
    CHECK(meta.action_class == 45);
    CHECK(encode_sample_name(meta) == "S001C002P003R002A045");

    auto from_path = decode_sample_name("/data/ntu/S017C001P020R002A060.skeleton");
    CHECK(from_path.setup_id == 17);
    CHECK(from_path.action_class == 60);

    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        SampleMeta m;
        m.setup_id = 1 + int(rng.uniform_index(999));
        m.camera_id = 1 + int(rng.uniform_index(999));
        m.performer_id = 1 + int(rng.uniform_index(999));
        m.replication_id = 1 + int(rng.uniform_index(999));
        m.action_class = 1 + int(rng.uniform_index(999));
        const std::string name = encode_sample_name(m);
        CHECK(encode_sample_name(decode_sample_name(name)) == name);
    }
}

TEST_CASE("sample name codec: malformed names are rejected") {
    CHECK_THROWS_AS(decode_sample_name("S001C002P003R002"), std::invalid_argument);
    CHECK_THROWS_AS(decode_sample_name("X001C002P003R002A045"), std::invalid_argument);
    CHECK_THROWS_AS(decode_sample_name("S001C002P0x3R002A045"), std::invalid_argument);
    CHECK_THROWS_AS(decode_sample_name("S000C002P003R002A045"), std::invalid_argument);
}

namespace {

DatasetManifest tiny_manifest(const std::vector<std::pair<int, int>>& camera_performer) {
    DatasetManifest manifest;
    int r = 1;
    for (auto [camera, performer] : camera_performer) {
        SampleEntry entry;
        entry.meta = SampleMeta{1, camera, performer, r++, 1};
        entry.id = encode_sample_name(entry.meta);
        manifest.samples.push_back(entry);
    }
    return manifest;
}

}  // namespace

TEST_CASE("cross-view split: camera 1 tests, cameras 2 and 3 train") {
    auto manifest = tiny_manifest({{1, 1}, {2, 1}, {3, 2}, {1, 3}, {2, 4}});
    auto split = split_cross_view(manifest);
    CHECK(split.train == std::vector<std::size_t>{1, 2, 4});
    CHECK(split.test == std::vector<std::size_t>{0, 3});
    CHECK(split.train.size() + split.test.size() == manifest.samples.size());

    auto bad = tiny_manifest({{4, 1}});
    CHECK_THROWS_AS(split_cross_view(bad), std::invalid_argument);
}

TEST_CASE("cross-subject split: configured performers train, everyone else tests") {
    auto manifest = tiny_manifest({{1, 1}, {1, 2}, {1, 3}, {1, 4}, {1, 5}});
    auto split = split_cross_subject(manifest, {1, 4});
    CHECK(split.train == std::vector<std::size_t>{0, 3});
    CHECK(split.test == std::vector<std::size_t>{1, 2, 4});
    CHECK_THROWS_AS(split_cross_subject(manifest, {}), std::invalid_argument);

    std::set<std::size_t> all;
    all.insert(split.train.begin(), split.train.end());
    all.insert(split.test.begin(), split.test.end());
    CHECK(all.size() == manifest.samples.size());  // every sample assigned exactly once
}

TEST_CASE("validation split: size, determinism, disjointness") {
    std::vector<std::size_t> train(1000);
    for (std::size_t i = 0; i < train.size(); ++i) train[i] = i;

    auto [rest, val] = validation_split(train, 0.05, 99);
    CHECK(val.size() == 50);
    CHECK(rest.size() == 950);

    auto [rest2, val2] = validation_split(train, 0.05, 99);
    CHECK(val == val2);
    CHECK(rest == rest2);

    auto [rest3, val3] = validation_split(train, 0.05, 100);
    CHECK(val != val3);  // different seeds split differently

    std::set<std::size_t> seen(val.begin(), val.end());
    for (std::size_t i : rest) CHECK(!seen.count(i));

    CHECK_THROWS_AS(validation_split({}, 0.05, 1), std::invalid_argument);
    CHECK_THROWS_AS(validation_split(train, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(validation_split(train, 1.0, 1), std::invalid_argument);
}

TEST_CASE("skeleton parser: minimal handcrafted file") {
    testutil::TempDir dir("skel");
    const std::string path = (dir.path() / "mini.skeleton").string();
    {
        std::ofstream out(path);
        out << "1\n1\n7 0 0 0 0 0 0 0.1 -0.2 2\n25\n";
        for (int j = 0; j < 25; ++j) {
            out << 0.1 * j << " " << 1.0 + 0.01 * j << " 3.0 100.0 50.0 200.0 100.0 0 0 0 0 2\n";
        }
    }
    auto seq = parse_skeleton_file(path);
    CHECK(seq.frame_count == 1);
    CHECK(seq.subject_count() == 1);
    CHECK(seq.subjects[0].body_id == 7);
    CHECK(seq.subjects[0].joints3d.cols() == 25);
    CHECK(seq.subjects[0].joints3d(0, 3) == doctest::Approx(0.3));
    CHECK(seq.subjects[0].joints2d(0, 0) == doctest::Approx(100.0));
}

TEST_CASE("skeleton parser: two bodies per frame become two stacked subjects") {
    testutil::TempDir dir("skel2");
    const std::string path = (dir.path() / "two.skeleton").string();
    {
        std::ofstream out(path);
        out << "2\n";
        for (int t = 0; t < 2; ++t) {
            out << "2\n";
            for (int b = 0; b < 2; ++b) {
                out << (b + 1) << " 0 0 0 0 0 0 0 0 2\n25\n";
                for (int j = 0; j < 25; ++j) {
                    // body 2 moves twice as fast, so it becomes the main subject
                    const double x = (b + 1) * 0.5 * t + 0.01 * j;
                    out << x << " 1.0 3.0 0 0 0 0 0 0 0 0 2\n";
                }
            }
        }
    }
    auto seq = parse_skeleton_file(path);
    CHECK(seq.frame_count == 2);
    CHECK(seq.subject_count() == 2);
    CHECK(seq.subjects[0].body_id == 2);  // higher displacement wins the main slot
    CHECK(seq.subjects[1].body_id == 1);
}

TEST_CASE("skeleton parser: body appearing mid-sequence gets zeros before its first frame") {
    testutil::TempDir dir("skel3");
    const std::string path = (dir.path() / "late.skeleton").string();
    {
        std::ofstream out(path);
        out << "2\n";
        out << "1\n1 0 0 0 0 0 0 0 0 2\n25\n";
        for (int j = 0; j < 25; ++j) out << "0.5 1.0 3.0 0 0 0 0 0 0 0 0 2\n";
        out << "2\n";
        out << "1 0 0 0 0 0 0 0 0 2\n25\n";
        for (int j = 0; j < 25; ++j) out << "0.6 1.0 3.0 0 0 0 0 0 0 0 0 2\n";
        out << "9 0 0 0 0 0 0 0 0 2\n25\n";
        for (int j = 0; j < 25; ++j) out << "2.0 1.0 3.0 0 0 0 0 0 0 0 0 2\n";
    }
    auto seq = parse_skeleton_file(path);
    REQUIRE(seq.subject_count() == 2);
    const auto& late = seq.subjects[0].body_id == 9 ? seq.subjects[0] : seq.subjects[1];
    CHECK(late.joints3d.col(SkeletonSequence::column(0, 0)).norm() == 0.0);
    CHECK(late.joints3d(0, SkeletonSequence::column(0, 1)) == doctest::Approx(2.0));
}

TEST_CASE("skeleton parser: malformed files fail with a line number") {
    testutil::TempDir dir("skelbad");
    const std::string truncated = (dir.path() / "trunc.skeleton").string();
    {
        std::ofstream out(truncated);
        out << "2\n1\n1 0 0 0 0 0 0 0 0 2\n25\n0.1 0.2\n";
    }
    CHECK_THROWS_WITH_AS(parse_skeleton_file(truncated), doctest::Contains(":5"),
                         std::runtime_error);

    const std::string nonnum = (dir.path() / "nonnum.skeleton").string();
    {
        std::ofstream out(nonnum);
        out << "1\nbanana\n";
    }
    CHECK_THROWS_AS(parse_skeleton_file(nonnum), std::runtime_error);
}

TEST_CASE("skeleton writer/parser round trip preserves coordinates to 1e-5") {
    testutil::TempDir dir("skelrt");
    Rng rng(17);
    SkeletonSequence seq;
    seq.frame_count = 5;
    for (int s = 0; s < 2; ++s) {
        SkeletonSubject subject;
        subject.body_id = s + 1;
        subject.joints3d = Eigen::Matrix3Xd::NullaryExpr(3, kJointCount * 5,
                                                         [&] { return rng.uniform(-2.0, 4.0); });
        subject.joints2d = Eigen::Matrix2Xd::NullaryExpr(2, kJointCount * 5,
                                                         [&] { return rng.uniform(0.0, 400.0); });
        // make subject 0 clearly the bigger mover so the main slot is stable
        if (s == 1) {
            subject.joints3d = subject.joints3d * 0.05;
        }
        seq.subjects.push_back(std::move(subject));
    }
    const std::string path = (dir.path() / "rt.skeleton").string();
    write_skeleton_file(path, seq);
    auto loaded = parse_skeleton_file(path);
    REQUIRE(loaded.subject_count() == 2);
    for (int s = 0; s < 2; ++s) {
        CHECK((loaded.subjects[s].joints3d - seq.subjects[s].joints3d).cwiseAbs().maxCoeff() < 1e-5);
        CHECK((loaded.subjects[s].joints2d - seq.subjects[s].joints2d).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("synthetic dataset: generation, manifest, and cross-module properties") {
    testutil::TempDir dir("synth");
    SynthConfig config;
    config.classes = 4;
    config.per_class = 6;
    config.seed = 11;
    config.out_dir = dir.path().string();
    config.min_frames = 20;
    config.max_frames = 32;
    auto manifest = generate_synthetic_dataset(config);
    CHECK(manifest.samples.size() == 24);
    CHECK(manifest.class_count == 4);
    CHECK(manifest.projection.count("fx") == 1);

    auto reloaded = DatasetManifest::load((dir.path() / "manifest.json").string());
    CHECK(reloaded.samples.size() == 24);

    int boxes_outside_frame = 0;
    for (const auto& entry : manifest.samples) {
        auto seq = parse_skeleton_file(entry.skeleton_path);
        auto ir = load_ir(entry.ir_path);
        CHECK(seq.frame_count == ir.frame_count);
        if (entry.meta.action_class == 4) {
            CHECK(seq.subject_count() == 2);  // the approach class carries two bodies
        } else {
            CHECK(seq.subject_count() == 1);
        }
        // every projected joint lies inside the crop box, on every frame
        auto box = compute_crop_box(seq, 20);
        for (const auto& subject : seq.subjects) {
            CHECK(subject.joints2d.row(0).minCoeff() >= double(box.x_min));
            CHECK(subject.joints2d.row(0).maxCoeff() <= double(box.x_max));
            CHECK(subject.joints2d.row(1).minCoeff() >= double(box.y_min));
            CHECK(subject.joints2d.row(1).maxCoeff() <= double(box.y_max));
        }
        if (box.x_min < 0 || box.y_min < 0 || box.x_max > ir.width || box.y_max > ir.height) {
            ++boxes_outside_frame;
        }
    }
    CHECK(boxes_outside_frame > 0);  // the zero-padding path is exercised by the corpus
}

TEST_CASE("synthetic dataset: fixed seed regenerates byte-identical files") {
    auto read_bytes = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    testutil::TempDir dir_a("synth-a");
    testutil::TempDir dir_b("synth-b");
    SynthConfig config;
    config.classes = 2;
    config.per_class = 2;
    config.seed = 5;
    config.min_frames = 12;
    config.max_frames = 16;

    config.out_dir = dir_a.path().string();
    auto a = generate_synthetic_dataset(config);
    config.out_dir = dir_b.path().string();
    auto b = generate_synthetic_dataset(config);

    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(read_bytes(a.samples[i].skeleton_path) == read_bytes(b.samples[i].skeleton_path));
        CHECK(read_bytes(a.samples[i].ir_path) == read_bytes(b.samples[i].ir_path));
    }
}

TEST_CASE("synthetic dataset: classes separable by a nearest-centroid baseline") {
    testutil::TempDir dir("synthsep");
    SynthConfig config;
    config.classes = 4;
    config.per_class = 10;
    config.seed = 23;
    config.out_dir = dir.path().string();
    config.min_frames = 24;
    config.max_frames = 40;
    auto manifest = generate_synthetic_dataset(config);

    // feature: per-joint mean and standard deviation of the normalized 3D
    // trajectory of the main subject
    auto featurize = [](const SkeletonSequence& seq) {
        auto norm = normalize_sequence(seq);
        const auto& joints = norm.subjects[0].joints3d;
        Eigen::VectorXd f(kJointCount * 6);
        for (Index j = 0; j < kJointCount; ++j) {
            Eigen::Matrix3Xd track(3, norm.frame_count);
            for (Index t = 0; t < norm.frame_count; ++t) {
                track.col(t) = joints.col(SkeletonSequence::column(j, t));
            }
            const Eigen::Vector3d mean = track.rowwise().mean();
            const Eigen::Vector3d var =
                (track.colwise() - mean).cwiseAbs2().rowwise().mean();
            f.segment<3>(6 * j) = mean;
            f.segment<3>(6 * j + 3) = var.cwiseSqrt();
        }
        return f;
    };

    std::vector<Eigen::VectorXd> features;
    std::vector<int> labels;
    for (const auto& entry : manifest.samples) {
        features.push_back(featurize(parse_skeleton_file(entry.skeleton_path)));
        labels.push_back(entry.meta.action_class - 1);
    }
    // leave-one-out nearest centroid
    int correct = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        std::vector<Eigen::VectorXd> centroids(4, Eigen::VectorXd::Zero(features[0].size()));
        std::vector<int> counts(4, 0);
        for (std::size_t k = 0; k < features.size(); ++k) {
            if (k == i) continue;
            centroids[std::size_t(labels[k])] += features[k];
            counts[std::size_t(labels[k])]++;
        }
        int best = -1;
        double best_dist = 1e300;
        for (int c = 0; c < 4; ++c) {
            const double dist = (features[i] - centroids[std::size_t(c)] / counts[std::size_t(c)]).norm();
            if (dist < best_dist) {
                best_dist = dist;
                best = c;
            }
        }
        if (best == labels[i]) ++correct;
    }
    const double accuracy = double(correct) / double(features.size());
    CHECK(accuracy > 0.5);  // far above the 0.25 chance level
}
