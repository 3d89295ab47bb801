#include "fusion/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fusion {

namespace {

int parse_id_field(const std::string& name, std::size_t at, char tag) {
    if (name[at] != tag) {
        throw std::invalid_argument("decode_sample_name: expected '" + std::string(1, tag) +
                                    "' at position " + std::to_string(at) + " of '" + name + "'");
    }
    int value = 0;
    const auto res = std::from_chars(name.data() + at + 1, name.data() + at + 4, value);
    if (res.ec != std::errc{} || res.ptr != name.data() + at + 4) {
        throw std::invalid_argument("decode_sample_name: bad numeric field after '" +
                                    std::string(1, tag) + "' in '" + name + "'");
    }
    return value;
}

}  // namespace

SampleMeta decode_sample_name(const std::string& name) {
    std::string stem = name;
    if (const auto slash = stem.find_last_of('/'); slash != std::string::npos) {
        stem = stem.substr(slash + 1);
    }
    if (const auto dot = stem.find('.'); dot != std::string::npos) stem = stem.substr(0, dot);
    if (stem.size() != 20) {
        throw std::invalid_argument("decode_sample_name: '" + stem +
                                    "' is not of the form S###C###P###R###A###");
    }
    SampleMeta meta;
    meta.setup_id = parse_id_field(stem, 0, 'S');
    meta.camera_id = parse_id_field(stem, 4, 'C');
    meta.performer_id = parse_id_field(stem, 8, 'P');
    meta.replication_id = parse_id_field(stem, 12, 'R');
    meta.action_class = parse_id_field(stem, 16, 'A');
    if (meta.setup_id < 1 || meta.camera_id < 1 || meta.performer_id < 1 ||
        meta.replication_id < 1 || meta.action_class < 1) {
        throw std::invalid_argument("decode_sample_name: ids must be >= 1 in '" + stem + "'");
    }
    return meta;
}

std::string encode_sample_name(const SampleMeta& meta) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "S%03dC%03dP%03dR%03dA%03d", meta.setup_id, meta.camera_id,
                  meta.performer_id, meta.replication_id, meta.action_class);
    return buf;
}

void DatasetManifest::save(const std::string& path) const {
    nlohmann::json doc;
    doc["format"] = "fusion-dataset-v1";
    doc["seed"] = seed;
    doc["class_count"] = class_count;
    doc["projection"] = projection;
    auto& list = doc["samples"] = nlohmann::json::array();
    for (const auto& s : samples) {
        list.push_back({{"id", s.id},
                        {"skeleton", s.skeleton_path},
                        {"ir", s.ir_path}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    out << doc.dump(2) << "\n";
}

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    DatasetManifest manifest;
    manifest.seed = doc.value("seed", std::uint64_t{0});
    manifest.class_count = doc.value("class_count", 0);
    if (doc.contains("projection")) {
        manifest.projection = doc.at("projection").get<std::map<std::string, double>>();
    }
    for (const auto& s : doc.at("samples")) {
        SampleEntry entry;
        entry.id = s.at("id").get<std::string>();
        entry.skeleton_path = s.at("skeleton").get<std::string>();
        entry.ir_path = s.at("ir").get<std::string>();
        entry.meta = decode_sample_name(entry.id);
        manifest.samples.push_back(std::move(entry));
    }
    return manifest;
}

SplitAssignment split_cross_view(const DatasetManifest& manifest) {
    SplitAssignment split;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        const int camera = manifest.samples[i].meta.camera_id;
        if (camera == 2 || camera == 3) {
            split.train.push_back(i);
        } else if (camera == 1) {
            split.test.push_back(i);
        } else {
            throw std::invalid_argument("split_cross_view: sample " + manifest.samples[i].id +
                                        " has camera id " + std::to_string(camera) +
                                        " outside {1,2,3}");
        }
    }
    return split;
}

SplitAssignment split_cross_subject(const DatasetManifest& manifest,
                                    const std::vector<int>& train_subject_ids) {
    if (train_subject_ids.empty()) {
        throw std::invalid_argument("split_cross_subject: empty training-subject list");
    }
    SplitAssignment split;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        const int performer = manifest.samples[i].meta.performer_id;
        const bool in_train = std::find(train_subject_ids.begin(), train_subject_ids.end(),
                                        performer) != train_subject_ids.end();
        (in_train ? split.train : split.test).push_back(i);
    }
    return split;
}

const std::vector<int>& default_cs_training_subjects() {
    static const std::vector<int> ids{1,  2,  4,  5,  8,  9,  13, 14, 15, 16,
                                      17, 18, 19, 25, 27, 28, 31, 34, 35, 38};
    return ids;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> validation_split(
    const std::vector<std::size_t>& train, double fraction, std::uint64_t seed) {
    if (train.empty()) {
        throw std::invalid_argument("validation_split: empty training set");
    }
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("validation_split: fraction must be in (0,1)");
    }
    const std::size_t k = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(train.size())));
    std::vector<std::size_t> shuffled = train;
    Rng rng(seed);
    rng.shuffle(shuffled);
    std::vector<std::size_t> validation(shuffled.begin(), shuffled.begin() + std::min(k, shuffled.size()));
    std::vector<std::size_t> remaining(shuffled.begin() + std::min(k, shuffled.size()), shuffled.end());
    std::sort(validation.begin(), validation.end());
    std::sort(remaining.begin(), remaining.end());
    return {remaining, validation};
}

namespace {

struct LineReader {
    std::istream& in;
    const std::string& path;
    long line_no = 0;

    std::string next() {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return line;
        }
        throw std::runtime_error("parse_skeleton_file: " + path + ": unexpected end of file at line " +
                                 std::to_string(line_no));
    }

    long read_count(const char* what) {
        const std::string line = next();
        long value = 0;
        const auto res = std::from_chars(line.data(), line.data() + line.size(), value);
        if (res.ec != std::errc{} || value < 0) {
            throw std::runtime_error("parse_skeleton_file: " + path + ":" + std::to_string(line_no) +
                                     ": expected " + std::string(what) + ", got '" + line + "'");
        }
        return value;
    }

    std::vector<double> read_floats(std::size_t expect_at_least, const char* what) {
        const std::string line = next();
        std::vector<double> values;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p < end) {
            while (p < end && (*p == ' ' || *p == '\t')) ++p;
            if (p >= end) break;
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc{}) {
                throw std::runtime_error("parse_skeleton_file: " + path + ":" +
                                         std::to_string(line_no) + ": non-numeric field in " +
                                         std::string(what));
            }
            values.push_back(v);
            p = res.ptr;
        }
        if (values.size() < expect_at_least) {
            throw std::runtime_error("parse_skeleton_file: " + path + ":" + std::to_string(line_no) +
                                     ": expected at least " + std::to_string(expect_at_least) +
                                     " fields in " + std::string(what) + ", got " +
                                     std::to_string(values.size()));
        }
        return values;
    }
};

struct BodyTrack {
    std::int64_t body_id;
    Eigen::Matrix3Xd joints3d;   // zero where untracked
    Eigen::Matrix2Xd joints2d;
    std::vector<bool> present;   // per frame

    double total_displacement() const {
        double total = 0.0;
        for (Index t = 1; t * kJointCount < joints3d.cols(); ++t) {
            total += (joints3d.middleCols(t * kJointCount, kJointCount) -
                      joints3d.middleCols((t - 1) * kJointCount, kJointCount))
                         .colwise()
                         .norm()
                         .sum();
        }
        return total;
    }
};

}  // namespace

SkeletonSequence parse_skeleton_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("parse_skeleton_file: cannot open " + path);
    LineReader reader{in, path};

    const long frame_count = reader.read_count("frame count");
    if (frame_count < 1) {
        throw std::runtime_error("parse_skeleton_file: " + path + ": frame count must be >= 1");
    }

    std::map<std::int64_t, BodyTrack> bodies;
    for (long t = 0; t < frame_count; ++t) {
        const long body_count = reader.read_count("body count");
        for (long b = 0; b < body_count; ++b) {
            const auto info = reader.read_floats(1, "body tracking-info line");
            const auto body_id = static_cast<std::int64_t>(info[0]);
            const long joint_count = reader.read_count("joint count");
            if (joint_count != kJointCount) {
                throw std::runtime_error("parse_skeleton_file: " + path + ":" +
                                         std::to_string(reader.line_no) + ": expected " +
                                         std::to_string(kJointCount) + " joints, got " +
                                         std::to_string(joint_count));
            }
            auto [it, inserted] = bodies.try_emplace(body_id);
            BodyTrack& track = it->second;
            if (inserted) {
                track.body_id = body_id;
                track.joints3d = Eigen::Matrix3Xd::Zero(3, kJointCount * frame_count);
                track.joints2d = Eigen::Matrix2Xd::Zero(2, kJointCount * frame_count);
                track.present.assign(static_cast<std::size_t>(frame_count), false);
            }
            track.present[static_cast<std::size_t>(t)] = true;
            for (long j = 0; j < joint_count; ++j) {
                const auto fields = reader.read_floats(12, "joint line");
                const Index col = SkeletonSequence::column(j, t);
                track.joints3d.col(col) = Eigen::Vector3d(fields[0], fields[1], fields[2]);
                track.joints2d.col(col) = Eigen::Vector2d(fields[3], fields[4]);
            }
        }
    }

    std::vector<BodyTrack*> tracks;
    for (auto& [id, track] : bodies) tracks.push_back(&track);
    if (tracks.empty()) {
        throw std::runtime_error("parse_skeleton_file: " + path + ": no tracked bodies");
    }
    // main subject: largest total joint displacement; ties broken by body id
    std::stable_sort(tracks.begin(), tracks.end(), [](const BodyTrack* a, const BodyTrack* b) {
        return a->total_displacement() > b->total_displacement();
    });
    if (tracks.size() > 2) tracks.resize(2);

    SkeletonSequence seq;
    seq.frame_count = frame_count;
    for (const BodyTrack* track : tracks) {
        SkeletonSubject subject;
        subject.body_id = track->body_id;
        subject.joints3d = track->joints3d;
        subject.joints2d = track->joints2d;
        seq.subjects.push_back(std::move(subject));
    }
    return seq;
}

void write_skeleton_file(const std::string& path, const SkeletonSequence& seq) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_skeleton_file: cannot write " + path);
    out << seq.frame_count << "\n";
    char buf[256];
    for (Index t = 0; t < seq.frame_count; ++t) {
        out << seq.subject_count() << "\n";
        for (const auto& subject : seq.subjects) {
            // tracking-info line: body id plus lean/confidence placeholders
            out << subject.body_id << " 0 0 0 0 0 0 0.0 0.0 2\n";
            out << kJointCount << "\n";
            for (Index j = 0; j < kJointCount; ++j) {
                const Index col = SkeletonSequence::column(j, t);
                const Eigen::Vector3d p = subject.joints3d.col(col);
                Eigen::Vector2d d = Eigen::Vector2d::Zero();
                if (subject.has_joints2d()) d = subject.joints2d.col(col);
                std::snprintf(buf, sizeof(buf),
                              "%.6f %.6f %.6f %.6f %.6f %.6f %.6f 0.0 0.0 0.0 0.0 2\n", p.x(), p.y(),
                              p.z(), d.x(), d.y(), d.x(), d.y());
                out << buf;
            }
        }
    }
    if (!out) throw std::runtime_error("write_skeleton_file: write failed for " + path);
}

std::vector<LoadedSample> load_samples(const DatasetManifest& manifest) {
    std::vector<LoadedSample> samples;
    samples.reserve(manifest.samples.size());
    for (const auto& entry : manifest.samples) {
        LoadedSample sample;
        sample.id = entry.id;
        sample.skeleton = parse_skeleton_file(entry.skeleton_path);
        sample.ir = load_ir(entry.ir_path);
        sample.label = entry.meta.action_class - 1;
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace fusion
