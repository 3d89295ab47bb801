#include "fusion/infrared.hpp"

#include <cmath>
#include <stdexcept>

#include "fusion/image.hpp"

namespace fusion {

CropBox compute_crop_box(const Eigen::Matrix2Xd& points, Index offset) {
    if (points.cols() == 0) {
        throw std::invalid_argument("compute_crop_box: no valid 2D joints");
    }
    if (!points.allFinite()) {
        throw std::invalid_argument("compute_crop_box: non-finite 2D joint coordinates");
    }
    CropBox box;
    box.x_min = static_cast<Index>(std::floor(points.row(0).minCoeff())) - offset;
    box.x_max = static_cast<Index>(std::ceil(points.row(0).maxCoeff())) + offset;
    box.y_min = static_cast<Index>(std::floor(points.row(1).minCoeff())) - offset;
    box.y_max = static_cast<Index>(std::ceil(points.row(1).maxCoeff())) + offset;
    return box;
}

CropBox compute_crop_box(const SkeletonSequence& seq, Index offset) {
    Index total = 0;
    for (const auto& subject : seq.subjects) {
        if (subject.has_joints2d()) total += subject.joints2d.cols();
    }
    if (total == 0) {
        throw std::invalid_argument("compute_crop_box: sequence carries no 2D joints");
    }
    Eigen::Matrix2Xd all(2, total);
    Index at = 0;
    for (const auto& subject : seq.subjects) {
        if (!subject.has_joints2d()) continue;
        all.middleCols(at, subject.joints2d.cols()) = subject.joints2d;
        at += subject.joints2d.cols();
    }
    return compute_crop_box(all, offset);
}

IrSequence crop_sequence(const IrSequence& seq, const CropBox& box) {
    if (box.width() < 1 || box.height() < 1) {
        throw std::invalid_argument("crop_sequence: box must have positive extents");
    }
    IrSequence out;
    out.frames.reserve(seq.frames.size());
    const Index h = seq.height(), w = seq.width();
    const Index y_lo = std::clamp<Index>(box.y_min, 0, h);
    const Index y_hi = std::clamp<Index>(box.y_max, 0, h);
    const Index x_lo = std::clamp<Index>(box.x_min, 0, w);
    const Index x_hi = std::clamp<Index>(box.x_max, 0, w);
    for (const auto& frame : seq.frames) {
        Eigen::MatrixXd cropped = Eigen::MatrixXd::Zero(box.height(), box.width());
        if (y_hi > y_lo && x_hi > x_lo) {
            cropped.block(y_lo - box.y_min, x_lo - box.x_min, y_hi - y_lo, x_hi - x_lo) =
                frame.block(y_lo, x_lo, y_hi - y_lo, x_hi - x_lo);
        }
        out.frames.push_back(std::move(cropped));
    }
    return out;
}

namespace {

// Integer frames inside window w of [0, f) split into t windows:
// [ceil(w*f/t), ceil((w+1)*f/t)).
struct Window {
    Index first;
    Index count;
    Index fallback;  // floor of the window start, used when count == 0
};

Window window_frames(Index f, Index t, Index w) {
    const Index first = (w * f + t - 1) / t;
    const Index next = ((w + 1) * f + t - 1) / t;
    return {first, next - first, (w * f) / t};
}

}  // namespace

std::vector<Index> sample_windows(Index frame_count, Index t, Rng& rng) {
    if (frame_count < 1 || t < 1) {
        throw std::invalid_argument("sample_windows: require frame_count >= 1 and t >= 1");
    }
    std::vector<Index> indices;
    indices.reserve(static_cast<std::size_t>(t));
    for (Index w = 0; w < t; ++w) {
        const Window win = window_frames(frame_count, t, w);
        if (win.count <= 0) {
            indices.push_back(win.fallback);
        } else {
            indices.push_back(win.first + Index(rng.uniform_index(std::uint64_t(win.count))));
        }
    }
    return indices;
}

std::vector<Index> sample_windows_midpoint(Index frame_count, Index t) {
    if (frame_count < 1 || t < 1) {
        throw std::invalid_argument("sample_windows_midpoint: require frame_count >= 1 and t >= 1");
    }
    std::vector<Index> indices;
    indices.reserve(static_cast<std::size_t>(t));
    for (Index w = 0; w < t; ++w) {
        const Window win = window_frames(frame_count, t, w);
        if (win.count <= 0) {
            indices.push_back(win.fallback);
            continue;
        }
        const Index mid = ((2 * w + 1) * frame_count) / (2 * t);
        indices.push_back(std::clamp(mid, win.first, win.first + win.count - 1));
    }
    return indices;
}

IrSequence resize_frames(const IrSequence& seq, Index size) {
    IrSequence out;
    out.frames.reserve(seq.frames.size());
    for (const auto& frame : seq.frames) {
        out.frames.push_back(bilinear_resize(frame, size, size));
    }
    return out;
}

void hflip_frames(std::vector<Eigen::MatrixXd>& frames) {
    for (auto& frame : frames) {
        frame = frame.rowwise().reverse().eval();
    }
}

bool augment_hflip(std::vector<Eigen::MatrixXd>& frames, Rng& rng) {
    if (!rng.bernoulli(0.5)) return false;
    hflip_frames(frames);
    return true;
}

IrClip to_three_channels(const std::vector<Eigen::MatrixXd>& frames,
                         std::vector<Index> source_indices) {
    if (frames.empty()) {
        throw std::invalid_argument("to_three_channels: empty clip");
    }
    const Index t = static_cast<Index>(frames.size());
    const Index size = frames.front().rows();
    if (frames.front().cols() != size) {
        throw std::invalid_argument("to_three_channels: frames must be square");
    }
    IrClip clip;
    clip.length = t;
    clip.size = size;
    clip.source_indices = std::move(source_indices);
    clip.data.resize(static_cast<std::size_t>(3 * t * size * size));
    const Index plane = size * size;
    for (Index f = 0; f < t; ++f) {
        const auto& m = frames[static_cast<std::size_t>(f)];
        double* dst = clip.data.data() + f * plane;
        for (Index r = 0; r < size; ++r) {
            for (Index c = 0; c < size; ++c) *dst++ = m(r, c);
        }
    }
    // duplicate the first channel plane-block into the other two
    const Index channel = t * plane;
    std::copy_n(clip.data.begin(), channel, clip.data.begin() + channel);
    std::copy_n(clip.data.begin(), channel, clip.data.begin() + 2 * channel);
    return clip;
}

}  // namespace fusion
