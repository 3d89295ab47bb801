#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fusion/rng.hpp"
#include "fusion/tensor.hpp"

namespace fusion {

inline constexpr Index kJointCount = 25;     // Kinect v2 joints per subject
inline constexpr Index kSpineMidIndex = 1;   // middle of the spine

// One tracked body. 3D joints in meters, optional 2D projections in pixels.
// Columns are indexed frame-major: column(j, t) = t * kJointCount + j.
struct SkeletonSubject {
    Eigen::Matrix3Xd joints3d;
    Eigen::Matrix2Xd joints2d;  // zero columns when absent
    std::int64_t body_id = 0;

    bool has_joints2d() const { return joints2d.cols() == joints3d.cols(); }
};

struct SkeletonSequence {
    std::vector<SkeletonSubject> subjects;  // main subject first, at most two
    Index frame_count = 0;
    Index spine_mid_index = kSpineMidIndex;

    Index subject_count() const { return static_cast<Index>(subjects.size()); }
    static Index column(Index joint, Index frame) { return frame * kJointCount + joint; }
};

// Dataset-wise minimum and maximum of normalized coordinates.
struct CoordinateExtrema {
    double c_min = 0.0;
    double c_max = 1.0;
};

// 3-channel image of a whole sequence: rows are joints of the two stacked
// subjects (2J total), columns are frames, channel k holds coordinate k
// mapped to [0,1].
struct SkeletonMap {
    std::array<Eigen::MatrixXd, 3> channels;

    Index rows() const { return channels[0].rows(); }
    Index cols() const { return channels[0].cols(); }
};

// Sequence-wise translation normalization: subtracts the main subject's
// spine-mid position at the first frame from every joint of every frame of
// every subject. The spine-mid of the main subject at the first frame lands
// exactly on the origin; a second application is the identity.
SkeletonSequence normalize_sequence(const SkeletonSequence& seq);

// Global min/max over all coordinates of all (normalized) sequences.
CoordinateExtrema compute_extrema(const std::vector<SkeletonSequence>& sequences);

void save_extrema(const CoordinateExtrema& extrema, const std::string& train_split_id,
                  const std::string& path);
CoordinateExtrema load_extrema(const std::string& path, std::string* train_split_id = nullptr);

// Eq-style min-max encoding into a 2J x frame_count map; coordinates outside
// the extrema clamp to [0,1]. Rows of an absent second subject are zero.
SkeletonMap encode_skeleton_map(const SkeletonSequence& seq, const CoordinateExtrema& extrema);

SkeletonMap resize_map(const SkeletonMap& map, Index rows, Index cols);

// Rotation by fixed angles (radians) about the local origin, composed as
// Rz * Ry * Rx, applied to all joints, frames and subjects.
SkeletonSequence rotate_sequence(const SkeletonSequence& seq, double rx, double ry, double rz);

// Training augmentation: one uniform angle in [-max_angle_deg, +max_angle_deg]
// per axis per sequence.
SkeletonSequence augment_rotation(const SkeletonSequence& seq, Rng& rng,
                                  double max_angle_deg = 20.0);

}  // namespace fusion
