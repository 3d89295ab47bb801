#pragma once

#include <Eigen/Core>

#include <stdexcept>

namespace fusion {

// Bilinear resize with corner-aligned sampling: source endpoints map to
// destination endpoints, so an equal-size resize is the identity and linear
// ramps stay linear. Output values are convex combinations of the input.
inline Eigen::MatrixXd bilinear_resize(const Eigen::MatrixXd& src, Eigen::Index out_rows,
                                       Eigen::Index out_cols) {
    if (src.rows() < 1 || src.cols() < 1) {
        throw std::invalid_argument("bilinear_resize: source must be at least 1x1");
    }
    if (out_rows < 1 || out_cols < 1) {
        throw std::invalid_argument("bilinear_resize: target extents must be >= 1");
    }
    const double row_scale = out_rows > 1 ? double(src.rows() - 1) / double(out_rows - 1) : 0.0;
    const double col_scale = out_cols > 1 ? double(src.cols() - 1) / double(out_cols - 1) : 0.0;

    Eigen::MatrixXd dst(out_rows, out_cols);
    for (Eigen::Index r = 0; r < out_rows; ++r) {
        const double sy = r * row_scale;
        const Eigen::Index y0 = static_cast<Eigen::Index>(sy);
        const Eigen::Index y1 = std::min(y0 + 1, src.rows() - 1);
        const double fy = sy - double(y0);
        for (Eigen::Index c = 0; c < out_cols; ++c) {
            const double sx = c * col_scale;
            const Eigen::Index x0 = static_cast<Eigen::Index>(sx);
            const Eigen::Index x1 = std::min(x0 + 1, src.cols() - 1);
            const double fx = sx - double(x0);
            const double top = src(y0, x0) * (1.0 - fx) + src(y0, x1) * fx;
            const double bot = src(y1, x0) * (1.0 - fx) + src(y1, x1) * fx;
            dst(r, c) = top * (1.0 - fy) + bot * fy;
        }
    }
    return dst;
}

}  // namespace fusion
