#include "fusion/skeleton.hpp"

#include <json.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "fusion/image.hpp"

namespace fusion {

namespace {

void check_finite(const SkeletonSequence& seq) {
    for (const auto& subject : seq.subjects) {
        if (!subject.joints3d.allFinite()) {
            throw std::invalid_argument("skeleton: sequence contains non-finite 3D coordinates");
        }
    }
}

}  // namespace

SkeletonSequence normalize_sequence(const SkeletonSequence& seq) {
    if (seq.subjects.empty()) {
        throw std::invalid_argument("normalize_sequence: no main subject present");
    }
    if (seq.frame_count < 1) {
        throw std::invalid_argument("normalize_sequence: sequence has no frames");
    }
    check_finite(seq);
    const Eigen::Vector3d origin =
        seq.subjects.front().joints3d.col(SkeletonSequence::column(seq.spine_mid_index, 0));

    SkeletonSequence out = seq;
    for (auto& subject : out.subjects) {
        subject.joints3d.colwise() -= origin;
    }
    return out;
}

CoordinateExtrema compute_extrema(const std::vector<SkeletonSequence>& sequences) {
    if (sequences.empty()) {
        throw std::invalid_argument("compute_extrema: no sequences given");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& seq : sequences) {
        for (const auto& subject : seq.subjects) {
            if (subject.joints3d.cols() == 0) continue;
            lo = std::min(lo, subject.joints3d.minCoeff());
            hi = std::max(hi, subject.joints3d.maxCoeff());
        }
    }
    if (!(lo < hi)) {
        throw std::invalid_argument("compute_extrema: degenerate coordinates, c_min == c_max");
    }
    return {lo, hi};
}

void save_extrema(const CoordinateExtrema& extrema, const std::string& train_split_id,
                  const std::string& path) {
    nlohmann::json doc;
    doc["c_min"] = extrema.c_min;
    doc["c_max"] = extrema.c_max;
    doc["train_split_id"] = train_split_id;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_extrema: cannot write " + path);
    out << doc.dump(2) << "\n";
}

CoordinateExtrema load_extrema(const std::string& path, std::string* train_split_id) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_extrema: cannot open " + path);
    nlohmann::json doc = nlohmann::json::parse(in);
    CoordinateExtrema extrema{doc.at("c_min").get<double>(), doc.at("c_max").get<double>()};
    if (!(extrema.c_min < extrema.c_max)) {
        throw std::runtime_error("load_extrema: invalid extrema in " + path);
    }
    if (train_split_id) *train_split_id = doc.value("train_split_id", "");
    return extrema;
}

SkeletonMap encode_skeleton_map(const SkeletonSequence& seq, const CoordinateExtrema& extrema) {
    if (seq.frame_count < 1) {
        throw std::invalid_argument("encode_skeleton_map: sequence has no frames");
    }
    if (!(extrema.c_min < extrema.c_max)) {
        throw std::invalid_argument("encode_skeleton_map: invalid extrema");
    }
    const double span = extrema.c_max - extrema.c_min;
    const Index rows = 2 * kJointCount;

    SkeletonMap map;
    for (auto& channel : map.channels) {
        channel = Eigen::MatrixXd::Zero(rows, seq.frame_count);
    }
    const Index n_subjects = std::min<Index>(seq.subject_count(), 2);
    for (Index s = 0; s < n_subjects; ++s) {
        const auto& joints = seq.subjects[static_cast<std::size_t>(s)].joints3d;
        for (Index t = 0; t < seq.frame_count; ++t) {
            for (Index j = 0; j < kJointCount; ++j) {
                const Eigen::Vector3d p = joints.col(SkeletonSequence::column(j, t));
                for (Index k = 0; k < 3; ++k) {
                    const double v = (p[k] - extrema.c_min) / span;
                    map.channels[static_cast<std::size_t>(k)](s * kJointCount + j, t) =
                        std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
    return map;
}

SkeletonMap resize_map(const SkeletonMap& map, Index rows, Index cols) {
    SkeletonMap out;
    for (std::size_t k = 0; k < 3; ++k) {
        out.channels[k] = bilinear_resize(map.channels[k], rows, cols);
    }
    return out;
}

SkeletonSequence rotate_sequence(const SkeletonSequence& seq, double rx, double ry, double rz) {
    const Eigen::Matrix3d rot =
        (Eigen::AngleAxisd(rz, Eigen::Vector3d::UnitZ()) *
         Eigen::AngleAxisd(ry, Eigen::Vector3d::UnitY()) *
         Eigen::AngleAxisd(rx, Eigen::Vector3d::UnitX()))
            .toRotationMatrix();
    SkeletonSequence out = seq;
    for (auto& subject : out.subjects) {
        subject.joints3d = rot * subject.joints3d;
    }
    return out;
}

SkeletonSequence augment_rotation(const SkeletonSequence& seq, Rng& rng, double max_angle_deg) {
    const double lim = max_angle_deg * M_PI / 180.0;
    const double rx = rng.uniform(-lim, lim);
    const double ry = rng.uniform(-lim, lim);
    const double rz = rng.uniform(-lim, lim);
    return rotate_sequence(seq, rx, ry, rz);
}

}  // namespace fusion
