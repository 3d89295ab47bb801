#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "fusion/conv.hpp"
#include "fusion/tensor.hpp"

namespace fusion {

namespace detail {

template <typename S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

}  // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape("add", a, b);
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op_node<S>(
        a.shape(), an->value + bn->value, {an, bn}, [an, bn](Node<S>& out) {
            if (an->requires_grad) an->ensure_grad() += out.grad;
            if (bn->requires_grad) bn->ensure_grad() += out.grad;
        });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape("mul", a, b);
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op_node<S>(
        a.shape(), an->value * bn->value, {an, bn}, [an, bn](Node<S>& out) {
            if (an->requires_grad) an->ensure_grad() += out.grad * bn->value;
            if (bn->requires_grad) bn->ensure_grad() += out.grad * an->value;
        });
}

// Product with a learnable scalar (shape [1]) tensor.
template <typename S>
Tensor<S> broadcast_scale(const Tensor<S>& a, const Tensor<S>& s) {
    if (s.size() != 1) {
        throw std::invalid_argument("broadcast_scale: scale must be a scalar tensor");
    }
    auto an = a.node();
    auto sn = s.node();
    return detail::make_op_node<S>(
        a.shape(), an->value * sn->value[0], {an, sn}, [an, sn](Node<S>& out) {
            if (an->requires_grad) an->ensure_grad() += out.grad * sn->value[0];
            if (sn->requires_grad) sn->ensure_grad()[0] += (out.grad * an->value).sum();
        });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
    auto an = a.node();
    return detail::make_op_node<S>(a.shape(), an->value * factor, {an}, [an, factor](Node<S>& out) {
        if (an->requires_grad) an->ensure_grad() += out.grad * factor;
    });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
    auto an = a.node();
    Buffer<S> v(1);
    v[0] = an->value.sum();
    return detail::make_op_node<S>(Shape{1}, std::move(v), {an}, [an](Node<S>& out) {
        if (an->requires_grad) an->ensure_grad() += out.grad[0];
    });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    }
    auto an = a.node();
    return detail::make_op_node<S>(std::move(shape), an->value, {an}, [an](Node<S>& out) {
        if (an->requires_grad) an->ensure_grad() += out.grad;
    });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
    auto an = a.node();
    return detail::make_op_node<S>(a.shape(), an->value.max(S(0)), {an}, [an](Node<S>& out) {
        if (an->requires_grad) an->ensure_grad() += (out.value > S(0)).template cast<S>() * out.grad;
    });
}

// Factorized (2+1)D convolution: 1 x d x d spatial convolution to mid
// channels, a ReLU, then t x 1 x 1 temporal convolution to out_channels.
// Output extents equal the full 3D convolution with the same spec.
template <typename S>
Tensor<S> factorized_conv3d(const Tensor<S>& x, const Tensor<S>& w_spatial,
                            const Tensor<S>& w_temporal, const Tensor<S>& b_spatial,
                            const Tensor<S>& b_temporal, const ConvSpec& spec, Index mid) {
    Tensor<S> h = conv3d(x, w_spatial, b_spatial, spatial_spec(spec, mid));
    return conv3d(relu(h), w_temporal, b_temporal, temporal_spec(spec, mid));
}

// x: [N, in], weight: [out, in], bias: [out] (optional).
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias) {
    if (x.shape().size() != 2) {
        throw std::invalid_argument("linear: input must be [N,features], got " + shape_str(x.shape()));
    }
    const Index n = x.shape()[0];
    const Index in = x.shape()[1];
    if (weight.shape().size() != 2 || weight.shape()[1] != in) {
        throw std::invalid_argument("linear: weight " + shape_str(weight.shape()) +
                                    " incompatible with input " + shape_str(x.shape()));
    }
    const Index out_dim = weight.shape()[0];
    if (bias.valid() && bias.shape() != Shape{out_dim}) {
        throw std::invalid_argument("linear: bias shape " + shape_str(bias.shape()) + " must be [" +
                                    std::to_string(out_dim) + "]");
    }

    using MatRM = detail::MatRM<S>;
    Buffer<S> out(n * out_dim);
    {
        Eigen::Map<const MatRM> xm(x.data(), n, in);
        Eigen::Map<const MatRM> wm(weight.data(), out_dim, in);
        Eigen::Map<MatRM> ym(out.data(), n, out_dim);
        ym.noalias() = xm * wm.transpose();
        if (bias.valid()) {
            ym.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(bias.data(), out_dim);
        }
    }

    auto xn = x.node();
    auto wn = weight.node();
    auto bn = bias.valid() ? bias.node() : nullptr;
    std::vector<std::shared_ptr<Node<S>>> parents{xn, wn};
    if (bn) parents.push_back(bn);
    auto backward_fn = [xn, wn, bn, n, in, out_dim](Node<S>& out_node) {
        Eigen::Map<const MatRM> gy(out_node.grad.data(), n, out_dim);
        if (xn->requires_grad) {
            xn->ensure_grad();
            Eigen::Map<const MatRM> wm(wn->value.data(), out_dim, in);
            Eigen::Map<MatRM> gx(xn->grad.data(), n, in);
            gx.noalias() += gy * wm;
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            Eigen::Map<const MatRM> xm(xn->value.data(), n, in);
            Eigen::Map<MatRM> gw(wn->grad.data(), out_dim, in);
            gw.noalias() += gy.transpose() * xm;
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gb(bn->grad.data(), out_dim);
            gb.noalias() += gy.colwise().sum().transpose();
        }
    };
    return detail::make_op_node<S>(Shape{n, out_dim}, std::move(out), std::move(parents),
                                   std::move(backward_fn));
}

// kernel k x k, stride s, zero-padding p on [N,C,H,W]. Padded cells never win.
template <typename S>
Tensor<S> max_pool2d(const Tensor<S>& x, Index k, Index s, Index p) {
    if (x.shape().size() != 4) {
        throw std::invalid_argument("max_pool2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
    }
    if (k < 1 || s < 1 || p < 0 || p >= k) {
        throw std::invalid_argument("max_pool2d: require k>=1, s>=1, 0<=p<k");
    }
    const Index n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const Index ho = (h + 2 * p - k) / s + 1;
    const Index wo = (w + 2 * p - k) / s + 1;
    if (h + 2 * p < k || w + 2 * p < k) {
        throw std::invalid_argument("max_pool2d: kernel does not fit");
    }

    Buffer<S> out(n * c * ho * wo);
    auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(n * c * ho * wo));
    const S* xv = x.data();
    Index o = 0;
    for (Index i = 0; i < n * c; ++i) {
        const S* plane = xv + i * h * w;
        for (Index yo = 0; yo < ho; ++yo) {
            for (Index xo = 0; xo < wo; ++xo, ++o) {
                const Index y0 = yo * s - p;
                const Index x0 = xo * s - p;
                S best = -std::numeric_limits<S>::infinity();
                Index best_idx = -1;
                for (Index dy = 0; dy < k; ++dy) {
                    const Index yy = y0 + dy;
                    if (yy < 0 || yy >= h) continue;
                    for (Index dx = 0; dx < k; ++dx) {
                        const Index xx = x0 + dx;
                        if (xx < 0 || xx >= w) continue;
                        const S v = plane[yy * w + xx];
                        if (v > best) {
                            best = v;
                            best_idx = i * h * w + yy * w + xx;
                        }
                    }
                }
                out[o] = best;
                (*argmax)[static_cast<std::size_t>(o)] = best_idx;
            }
        }
    }

    auto xn = x.node();
    return detail::make_op_node<S>(Shape{n, c, ho, wo}, std::move(out), {xn},
                                   [xn, argmax](Node<S>& out_node) {
                                       if (!xn->requires_grad) return;
                                       auto& gx = xn->ensure_grad();
                                       for (Index o = 0; o < out_node.grad.size(); ++o) {
                                           const Index idx = (*argmax)[static_cast<std::size_t>(o)];
                                           if (idx >= 0) gx[idx] += out_node.grad[o];
                                       }
                                   });
}

// Mean over every axis after the channel one: [N,C,...] -> [N,C].
template <typename S>
Tensor<S> global_average_pool(const Tensor<S>& x) {
    if (x.shape().size() < 3) {
        throw std::invalid_argument("global_average_pool: input must be [N,C,spatial...], got " +
                                    shape_str(x.shape()));
    }
    const Index n = x.shape()[0], c = x.shape()[1];
    const Index spatial = x.size() / (n * c);
    Buffer<S> out(n * c);
    const S* xv = x.data();
    for (Index i = 0; i < n * c; ++i) {
        out[i] = Eigen::Map<const Buffer<S>>(xv + i * spatial, spatial).sum() / S(spatial);
    }
    auto xn = x.node();
    return detail::make_op_node<S>(Shape{n, c}, std::move(out), {xn}, [xn, n, c, spatial](Node<S>& out_node) {
        if (!xn->requires_grad) return;
        auto& gx = xn->ensure_grad();
        for (Index i = 0; i < n * c; ++i) {
            Eigen::Map<Buffer<S>>(gx.data() + i * spatial, spatial) += out_node.grad[i] / S(spatial);
        }
    });
}

// Per-channel batch normalization over axis 1 of [N,C,...] (a [N,F] input is
// treated as F channels). Training mode uses batch statistics and folds them
// into the running buffers with the given momentum; eval mode uses the frozen
// running statistics. Training requires batch size >= 2.
template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Buffer<S>& running_mean, Buffer<S>& running_var, bool training,
                     S momentum = S(0.1), S eps = S(1e-5)) {
    if (x.shape().size() < 2) {
        throw std::invalid_argument("batch_norm: input must have a channel axis, got " +
                                    shape_str(x.shape()));
    }
    const Index n = x.shape()[0], c = x.shape()[1];
    const Index spatial = x.size() / (n * c);
    const Index m = n * spatial;
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c} || running_mean.size() != c ||
        running_var.size() != c) {
        throw std::invalid_argument("batch_norm: parameter extents do not match " + std::to_string(c) +
                                    " channels");
    }
    if (training && n < 2) {
        throw std::invalid_argument("batch_norm: training mode requires batch size >= 2, got " +
                                    std::to_string(n));
    }

    Buffer<S> mean(c), inv_std(c);
    if (training) {
        Buffer<S> var(c);
        mean.setZero();
        var.setZero();
        const S* xv = x.data();
        for (Index i = 0; i < n; ++i) {
            for (Index ch = 0; ch < c; ++ch) {
                mean[ch] += Eigen::Map<const Buffer<S>>(xv + (i * c + ch) * spatial, spatial).sum();
            }
        }
        mean /= S(m);
        for (Index i = 0; i < n; ++i) {
            for (Index ch = 0; ch < c; ++ch) {
                var[ch] += (Eigen::Map<const Buffer<S>>(xv + (i * c + ch) * spatial, spatial) - mean[ch])
                               .square()
                               .sum();
            }
        }
        var /= S(m);  // biased, used for normalization
        inv_std = (var + eps).rsqrt();
        const S unbias = m > 1 ? S(m) / S(m - 1) : S(1);
        running_mean = (S(1) - momentum) * running_mean + momentum * mean;
        running_var = (S(1) - momentum) * running_var + momentum * (var * unbias);
    } else {
        mean = running_mean;
        inv_std = (running_var + eps).rsqrt();
    }

    Buffer<S> out(x.size());
    {
        const S* xv = x.data();
        S* ov = out.data();
        for (Index i = 0; i < n; ++i) {
            for (Index ch = 0; ch < c; ++ch) {
                const Index off = (i * c + ch) * spatial;
                Eigen::Map<Buffer<S>>(ov + off, spatial) =
                    (Eigen::Map<const Buffer<S>>(xv + off, spatial) - mean[ch]) * inv_std[ch] *
                        gamma.value()[ch] +
                    beta.value()[ch];
            }
        }
    }

    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    auto backward_fn = [xn, gn, bn, mean, inv_std, training, n, c, spatial, m](Node<S>& out_node) {
        // per-channel reductions of dy and dy * xhat
        Buffer<S> sum_dy = Buffer<S>::Zero(c), sum_dy_xhat = Buffer<S>::Zero(c);
        const S* xv = xn->value.data();
        const S* gy = out_node.grad.data();
        for (Index i = 0; i < n; ++i) {
            for (Index ch = 0; ch < c; ++ch) {
                const Index off = (i * c + ch) * spatial;
                auto dy = Eigen::Map<const Buffer<S>>(gy + off, spatial);
                auto xhat =
                    (Eigen::Map<const Buffer<S>>(xv + off, spatial) - mean[ch]) * inv_std[ch];
                sum_dy[ch] += dy.sum();
                sum_dy_xhat[ch] += (dy * xhat).sum();
            }
        }
        if (bn->requires_grad) bn->ensure_grad() += sum_dy;
        if (gn->requires_grad) gn->ensure_grad() += sum_dy_xhat;
        if (xn->requires_grad) {
            auto& gx = xn->ensure_grad();
            for (Index i = 0; i < n; ++i) {
                for (Index ch = 0; ch < c; ++ch) {
                    const Index off = (i * c + ch) * spatial;
                    auto dy = Eigen::Map<const Buffer<S>>(gy + off, spatial);
                    const S g = gn->value[ch];
                    if (training) {
                        auto xhat =
                            (Eigen::Map<const Buffer<S>>(xv + off, spatial) - mean[ch]) * inv_std[ch];
                        Eigen::Map<Buffer<S>>(gx.data() + off, spatial) +=
                            g * inv_std[ch] *
                            (dy - sum_dy[ch] / S(m) - xhat * (sum_dy_xhat[ch] / S(m)));
                    } else {
                        Eigen::Map<Buffer<S>>(gx.data() + off, spatial) += g * inv_std[ch] * dy;
                    }
                }
            }
        }
    };
    return detail::make_op_node<S>(x.shape(), std::move(out), {xn, gn, bn}, std::move(backward_fn));
}

// Row-wise softmax with max subtraction on [N,C].
template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
    if (x.shape().size() != 2) {
        throw std::invalid_argument("softmax: input must be [N,C], got " + shape_str(x.shape()));
    }
    const Index n = x.shape()[0], c = x.shape()[1];
    Buffer<S> out(n * c);
    for (Index i = 0; i < n; ++i) {
        auto row = Eigen::Map<const Buffer<S>>(x.data() + i * c, c);
        auto o = Eigen::Map<Buffer<S>>(out.data() + i * c, c);
        o = (row - row.maxCoeff()).exp();
        o /= o.sum();
    }
    auto xn = x.node();
    return detail::make_op_node<S>(x.shape(), std::move(out), {xn}, [xn, n, c](Node<S>& out_node) {
        if (!xn->requires_grad) return;
        auto& gx = xn->ensure_grad();
        for (Index i = 0; i < n; ++i) {
            auto p = Eigen::Map<const Buffer<S>>(out_node.value.data() + i * c, c);
            auto g = Eigen::Map<const Buffer<S>>(out_node.grad.data() + i * c, c);
            const S dot = (g * p).sum();
            Eigen::Map<Buffer<S>>(gx.data() + i * c, c) += p * (g - dot);
        }
    });
}

// Mean softmax cross-entropy over the batch, computed from logits via a
// numerically stable log-softmax. Gradient is (softmax - onehot) / N.
template <typename S>
Tensor<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<Index>& labels) {
    if (logits.shape().size() != 2) {
        throw std::invalid_argument("softmax_cross_entropy: logits must be [N,C], got " +
                                    shape_str(logits.shape()));
    }
    const Index n = logits.shape()[0], c = logits.shape()[1];
    if (static_cast<Index>(labels.size()) != n) {
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(n));
    }
    for (Index i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= c) {
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                                        " out of range [0," + std::to_string(c) + ")");
        }
    }

    auto probs = std::make_shared<Buffer<S>>(n * c);
    S loss = S(0);
    for (Index i = 0; i < n; ++i) {
        auto row = Eigen::Map<const Buffer<S>>(logits.data() + i * c, c);
        const S mx = row.maxCoeff();
        auto p = Eigen::Map<Buffer<S>>(probs->data() + i * c, c);
        p = (row - mx).exp();
        const S z = p.sum();
        loss += std::log(z) - (row[labels[i]] - mx);
        p /= z;
    }
    Buffer<S> v(1);
    v[0] = loss / S(n);

    auto xn = logits.node();
    auto lab = std::make_shared<std::vector<Index>>(labels);
    return detail::make_op_node<S>(Shape{1}, std::move(v), {xn}, [xn, probs, lab, n, c](Node<S>& out) {
        if (!xn->requires_grad) return;
        auto& gx = xn->ensure_grad();
        const S g = out.grad[0] / S(n);
        for (Index i = 0; i < n; ++i) {
            Eigen::Map<Buffer<S>>(gx.data() + i * c, c) +=
                g * Eigen::Map<const Buffer<S>>(probs->data() + i * c, c);
            gx[i * c + (*lab)[i]] -= g;
        }
    });
}

// Concatenation along axis 1.
template <typename S>
Tensor<S> concat(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[0] != b.shape()[0]) {
        throw std::invalid_argument("concat: inputs must be [N,*] with equal N, got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const Index n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    Buffer<S> out(n * (ca + cb));
    for (Index i = 0; i < n; ++i) {
        Eigen::Map<Buffer<S>>(out.data() + i * (ca + cb), ca) =
            Eigen::Map<const Buffer<S>>(a.data() + i * ca, ca);
        Eigen::Map<Buffer<S>>(out.data() + i * (ca + cb) + ca, cb) =
            Eigen::Map<const Buffer<S>>(b.data() + i * cb, cb);
    }
    auto an = a.node();
    auto bn = b.node();
    return detail::make_op_node<S>(Shape{n, ca + cb}, std::move(out), {an, bn},
                                   [an, bn, n, ca, cb](Node<S>& out_node) {
                                       for (Index i = 0; i < n; ++i) {
                                           if (an->requires_grad) {
                                               Eigen::Map<Buffer<S>>(an->ensure_grad().data() + i * ca, ca) +=
                                                   Eigen::Map<const Buffer<S>>(
                                                       out_node.grad.data() + i * (ca + cb), ca);
                                           }
                                           if (bn->requires_grad) {
                                               Eigen::Map<Buffer<S>>(bn->ensure_grad().data() + i * cb, cb) +=
                                                   Eigen::Map<const Buffer<S>>(
                                                       out_node.grad.data() + i * (ca + cb) + ca, cb);
                                           }
                                       }
                                   });
}

// Inverted dropout; identity in eval mode.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, double p, Rng& rng, bool training) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    if (!training || p == 0.0) return reshape(x, x.shape());
    auto mask = std::make_shared<Buffer<S>>(x.size());
    const S keep_scale = S(1.0 / (1.0 - p));
    for (Index i = 0; i < x.size(); ++i) {
        (*mask)[i] = rng.uniform() < p ? S(0) : keep_scale;
    }
    auto xn = x.node();
    return detail::make_op_node<S>(x.shape(), xn->value * (*mask), {xn}, [xn, mask](Node<S>& out) {
        if (xn->requires_grad) xn->ensure_grad() += out.grad * (*mask);
    });
}

}  // namespace fusion
