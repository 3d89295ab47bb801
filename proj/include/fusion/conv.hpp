#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstring>

#include "fusion/tensor.hpp"

namespace fusion {

// A t x d x d convolution (2D when kernel_time == 1 and the time extents are
// trivial). Strides and zero-padding per axis.
struct ConvSpec {
    Index in_channels = 1;
    Index out_channels = 1;
    Index kernel_time = 1;   // t, frames
    Index kernel_space = 1;  // d, pixels, square
    Index stride_t = 1;
    Index stride_y = 1;
    Index stride_x = 1;
    Index pad_t = 0;
    Index pad_y = 0;
    Index pad_x = 0;

    void validate() const {
        if (in_channels < 1 || out_channels < 1 || kernel_time < 1 || kernel_space < 1 ||
            stride_t < 1 || stride_y < 1 || stride_x < 1) {
            throw std::invalid_argument("conv: channel, kernel and stride extents must be >= 1");
        }
        if (pad_t < 0 || pad_y < 0 || pad_x < 0) {
            throw std::invalid_argument("conv: padding must be >= 0");
        }
    }
};

// Mid-channel count of a factorized (2+1)D block chosen so its parameter
// count matches the full t x d x d convolution it replaces, clamped to 1 for
// degenerate tiny configurations.
inline Index mid_channels(Index n_in, Index n_out, Index t, Index d) {
    if (n_in < 1 || n_out < 1 || t < 1 || d < 1) {
        throw std::invalid_argument("mid_channels: all counts must be >= 1");
    }
    const Index m = (t * d * d * n_in * n_out) / (d * d * n_in + t * n_out);
    return std::max<Index>(Index{1}, m);
}

namespace detail {

struct ConvDims {
    Index n, c, t, h, w;
    Index c_out, kt, kh, kw;
    Index st, sy, sx, pt, py, px;
    Index to, ho, wo;
    Index patch;      // c * kt * kh * kw
    Index positions;  // to * ho * wo

    static Index out_extent(Index in, Index pad, Index k, Index stride, const char* axis) {
        const Index span = in + 2 * pad - k;
        if (span < 0) {
            throw std::invalid_argument(std::string("conv: kernel does not fit along ") + axis +
                                        " axis (extent " + std::to_string(in) + ", pad " +
                                        std::to_string(pad) + ", kernel " + std::to_string(k) + ")");
        }
        return span / stride + 1;
    }
};

inline ConvDims conv_dims(const Shape& input, const ConvSpec& spec, const Shape& weight,
                          bool spatial_only) {
    spec.validate();
    ConvDims d{};
    if (spatial_only) {
        if (input.size() != 4) {
            throw std::invalid_argument("conv2d: input must be [N,C,H,W], got " + shape_str(input));
        }
        if (spec.kernel_time != 1 || spec.stride_t != 1 || spec.pad_t != 0) {
            throw std::invalid_argument("conv2d: time extents of the spec must be trivial");
        }
        d.n = input[0]; d.c = input[1]; d.t = 1; d.h = input[2]; d.w = input[3];
    } else {
        if (input.size() != 5) {
            throw std::invalid_argument("conv3d: input must be [N,C,T,H,W], got " + shape_str(input));
        }
        d.n = input[0]; d.c = input[1]; d.t = input[2]; d.h = input[3]; d.w = input[4];
    }
    if (d.c != spec.in_channels) {
        throw std::invalid_argument("conv: input has " + std::to_string(d.c) +
                                    " channels but spec expects " + std::to_string(spec.in_channels));
    }
    d.c_out = spec.out_channels;
    d.kt = spec.kernel_time;
    d.kh = d.kw = spec.kernel_space;
    d.st = spec.stride_t; d.sy = spec.stride_y; d.sx = spec.stride_x;
    d.pt = spec.pad_t; d.py = spec.pad_y; d.px = spec.pad_x;

    const Shape expected = spatial_only
                               ? Shape{d.c_out, d.c, d.kh, d.kw}
                               : Shape{d.c_out, d.c, d.kt, d.kh, d.kw};
    if (weight != expected) {
        throw std::invalid_argument("conv: weight shape " + shape_str(weight) + " does not match spec " +
                                    shape_str(expected));
    }

    d.to = ConvDims::out_extent(d.t, d.pt, d.kt, d.st, "time");
    d.ho = ConvDims::out_extent(d.h, d.py, d.kh, d.sy, "height");
    d.wo = ConvDims::out_extent(d.w, d.px, d.kw, d.sx, "width");
    d.patch = d.c * d.kt * d.kh * d.kw;
    d.positions = d.to * d.ho * d.wo;
    return d;
}

// Gathers one sample's patches into a row-major patch x positions matrix.
// col(k, p): k walks (c, kt, kh, kw), p walks (to, ho, wo). Row-major keeps
// each kernel tap's positions contiguous so interior spans are plain copies.
template <typename S>
void im2col(const S* x, const ConvDims& d, S* col) {
    const Index hw = d.h * d.w;
    const Index phw = d.ho * d.wo;
    Index k = 0;
    for (Index c = 0; c < d.c; ++c) {
        for (Index it = 0; it < d.kt; ++it) {
            for (Index ih = 0; ih < d.kh; ++ih) {
                for (Index iw = 0; iw < d.kw; ++iw, ++k) {
                    S* row = col + k * d.positions;
                    for (Index to = 0; to < d.to; ++to) {
                        const Index tt = to * d.st - d.pt + it;
                        S* dst_t = row + to * phw;
                        if (tt < 0 || tt >= d.t) {
                            std::fill(dst_t, dst_t + phw, S(0));
                            continue;
                        }
                        const S* plane = x + (c * d.t + tt) * hw;
                        for (Index ho = 0; ho < d.ho; ++ho) {
                            const Index yy = ho * d.sy - d.py + ih;
                            S* dst = dst_t + ho * d.wo;
                            if (yy < 0 || yy >= d.h) {
                                std::fill(dst, dst + d.wo, S(0));
                                continue;
                            }
                            const S* src = plane + yy * d.w;
                            const Index x0 = iw - d.px;
                            if (d.sx == 1) {
                                const Index lo = std::clamp<Index>(-x0, 0, d.wo);
                                const Index hi = std::clamp<Index>(d.w - x0, lo, d.wo);
                                std::fill(dst, dst + lo, S(0));
                                if (hi > lo) std::memcpy(dst + lo, src + x0 + lo, std::size_t(hi - lo) * sizeof(S));
                                std::fill(dst + hi, dst + d.wo, S(0));
                            } else {
                                for (Index wo = 0; wo < d.wo; ++wo) {
                                    const Index xx = x0 + wo * d.sx;
                                    dst[wo] = (xx >= 0 && xx < d.w) ? src[xx] : S(0);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// Scatter-adds a row-major patch x positions matrix back onto one sample's
// gradient.
template <typename S>
void col2im_add(const S* col, const ConvDims& d, S* dx) {
    const Index hw = d.h * d.w;
    const Index phw = d.ho * d.wo;
    Index k = 0;
    for (Index c = 0; c < d.c; ++c) {
        for (Index it = 0; it < d.kt; ++it) {
            for (Index ih = 0; ih < d.kh; ++ih) {
                for (Index iw = 0; iw < d.kw; ++iw, ++k) {
                    const S* row = col + k * d.positions;
                    for (Index to = 0; to < d.to; ++to) {
                        const Index tt = to * d.st - d.pt + it;
                        if (tt < 0 || tt >= d.t) continue;
                        S* plane = dx + (c * d.t + tt) * hw;
                        for (Index ho = 0; ho < d.ho; ++ho) {
                            const Index yy = ho * d.sy - d.py + ih;
                            if (yy < 0 || yy >= d.h) continue;
                            const S* src = row + to * phw + ho * d.wo;
                            S* dst = plane + yy * d.w;
                            const Index x0 = iw - d.px;
                            if (d.sx == 1) {
                                const Index lo = std::clamp<Index>(-x0, 0, d.wo);
                                const Index hi = std::clamp<Index>(d.w - x0, lo, d.wo);
                                if (hi > lo) {
                                    Eigen::Map<Buffer<S>>(dst + x0 + lo, hi - lo) +=
                                        Eigen::Map<const Buffer<S>>(src + lo, hi - lo);
                                }
                            } else {
                                for (Index wo = 0; wo < d.wo; ++wo) {
                                    const Index xx = x0 + wo * d.sx;
                                    if (xx >= 0 && xx < d.w) dst[xx] += src[wo];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatCM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

// Per-thread im2col scratch, grown on demand and reused across calls.
template <typename S>
std::vector<S>& conv_scratch() {
    static thread_local std::vector<S> buf;
    return buf;
}

// Shared forward/backward for 2D (time extents trivial) and 3D convolution.
template <typename S>
Tensor<S> conv_impl(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                    const ConvSpec& spec, bool spatial_only) {
    const ConvDims d = conv_dims(x.shape(), spec, weight.shape(), spatial_only);
    if (bias.valid() && bias.shape() != Shape{d.c_out}) {
        throw std::invalid_argument("conv: bias shape " + shape_str(bias.shape()) + " must be [" +
                                    std::to_string(d.c_out) + "]");
    }

    Buffer<S> out(d.n * d.c_out * d.positions);
    auto& col = conv_scratch<S>();
    col.resize(static_cast<std::size_t>(d.patch * d.positions));
    Eigen::Map<const MatRM<S>> wm(weight.data(), d.c_out, d.patch);
    for (Index n = 0; n < d.n; ++n) {
        im2col(x.data() + n * d.c * d.t * d.h * d.w, d, col.data());
        Eigen::Map<const MatRM<S>> cm(col.data(), d.patch, d.positions);
        Eigen::Map<MatRM<S>> ym(out.data() + n * d.c_out * d.positions, d.c_out, d.positions);
        ym.noalias() = wm * cm;
        if (bias.valid()) ym.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(bias.data(), d.c_out);
    }

    Shape out_shape = spatial_only ? Shape{d.n, d.c_out, d.ho, d.wo}
                                   : Shape{d.n, d.c_out, d.to, d.ho, d.wo};

    auto xb = x.node();
    auto wb = weight.node();
    auto bb = bias.valid() ? bias.node() : nullptr;
    std::vector<std::shared_ptr<Node<S>>> parents{xb, wb};
    if (bb) parents.push_back(bb);

    auto backward_fn = [xb, wb, bb, d](Node<S>& out_node) {
        auto& col = conv_scratch<S>();
        col.resize(static_cast<std::size_t>(d.patch * d.positions));
        const bool need_dx = xb->requires_grad;
        const bool need_dw = wb->requires_grad;
        if (need_dx) xb->ensure_grad();
        if (need_dw) wb->ensure_grad();
        Eigen::Map<const MatRM<S>> wm(wb->value.data(), d.c_out, d.patch);
        for (Index n = 0; n < d.n; ++n) {
            Eigen::Map<const MatRM<S>> gy(out_node.grad.data() + n * d.c_out * d.positions, d.c_out,
                                          d.positions);
            if (need_dw) {
                im2col(xb->value.data() + n * d.c * d.t * d.h * d.w, d, col.data());
                Eigen::Map<const MatRM<S>> cm(col.data(), d.patch, d.positions);
                Eigen::Map<MatRM<S>> gw(wb->grad.data(), d.c_out, d.patch);
                gw.noalias() += gy * cm.transpose();
            }
            if (need_dx) {
                Eigen::Map<MatRM<S>> dcol(col.data(), d.patch, d.positions);
                dcol.noalias() = wm.transpose() * gy;
                col2im_add(col.data(), d, xb->grad.data() + n * d.c * d.t * d.h * d.w);
            }
        }
        if (bb && bb->requires_grad) {
            bb->ensure_grad();
            for (Index n = 0; n < d.n; ++n) {
                Eigen::Map<const MatRM<S>> gy(out_node.grad.data() + n * d.c_out * d.positions,
                                              d.c_out, d.positions);
                Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gb(bb->grad.data(), d.c_out);
                gb.noalias() += gy.rowwise().sum();
            }
        }
    };

    return detail::make_op_node<S>(std::move(out_shape), std::move(out), std::move(parents),
                                   std::move(backward_fn));
}

}  // namespace detail

// Cross-correlation on [N,C,H,W]. Output extent per axis: (in + 2p - d)/s + 1.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                 const ConvSpec& spec) {
    return detail::conv_impl(x, weight, bias, spec, /*spatial_only=*/true);
}

// Cross-correlation on [N,C,T,H,W] with a t x d x d kernel.
template <typename S>
Tensor<S> conv3d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                 const ConvSpec& spec) {
    return detail::conv_impl(x, weight, bias, spec, /*spatial_only=*/false);
}

// Spec of the 1 x d x d spatial half of a factorized block.
inline ConvSpec spatial_spec(const ConvSpec& spec, Index mid) {
    ConvSpec s = spec;
    s.out_channels = mid;
    s.kernel_time = 1;
    s.stride_t = 1;
    s.pad_t = 0;
    return s;
}

// Spec of the t x 1 x 1 temporal half.
inline ConvSpec temporal_spec(const ConvSpec& spec, Index mid) {
    ConvSpec s = spec;
    s.in_channels = mid;
    s.kernel_space = 1;
    s.stride_y = s.stride_x = 1;
    s.pad_y = s.pad_x = 0;
    return s;
}

}  // namespace fusion
