#pragma once

#include <Eigen/Core>

#include <vector>

#include "fusion/rng.hpp"
#include "fusion/skeleton.hpp"
#include "fusion/tensor.hpp"

namespace fusion {

// Single-channel intensity video, values in [0,1], constant extents.
struct IrSequence {
    std::vector<Eigen::MatrixXd> frames;

    Index frame_count() const { return static_cast<Index>(frames.size()); }
    Index height() const { return frames.empty() ? 0 : frames.front().rows(); }
    Index width() const { return frames.empty() ? 0 : frames.front().cols(); }
};

// Fixed bounding box for a whole sequence, in pixels, upper bounds exclusive.
// May extend beyond the frame; cropping zero-pads the overhang.
struct CropBox {
    Index x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    Index width() const { return x_max - x_min; }
    Index height() const { return y_max - y_min; }
};

// The assembled IR module input: 3 x T x size x size, all channels identical,
// plus the source frame indices for reproducibility.
struct IrClip {
    Index length = 0;
    Index size = 0;
    std::vector<double> data;  // row-major [3][T][size][size]
    std::vector<Index> source_indices;

    Shape shape() const { return {3, length, size, size}; }
};

// Min/max over a 2 x n point set, floored/ceiled to pixels, expanded by
// offset on every side.
CropBox compute_crop_box(const Eigen::Matrix2Xd& points, Index offset = 20);

// Box over every joint of every subject in every frame of the sequence.
CropBox compute_crop_box(const SkeletonSequence& seq, Index offset = 20);

// Crops every frame to the box; regions outside the source frame are zero.
IrSequence crop_sequence(const IrSequence& seq, const CropBox& box);

// Divides [0, frame_count) into t windows of equal real duration and draws
// one integer frame uniformly from each; a window holding no integer falls
// back to the floor of its start. Output has length exactly t, nondecreasing.
std::vector<Index> sample_windows(Index frame_count, Index t, Rng& rng);

// Deterministic variant for evaluation: the integer frame nearest to each
// window midpoint.
std::vector<Index> sample_windows_midpoint(Index frame_count, Index t);

IrSequence resize_frames(const IrSequence& seq, Index size);

// Mirrors all frames left-right with probability 0.5 (one decision per clip).
// Returns whether the flip was applied.
bool augment_hflip(std::vector<Eigen::MatrixXd>& frames, Rng& rng);

void hflip_frames(std::vector<Eigen::MatrixXd>& frames);

// Duplicates the single channel into three identical ones.
IrClip to_three_channels(const std::vector<Eigen::MatrixXd>& frames,
                         std::vector<Index> source_indices);

}  // namespace fusion
