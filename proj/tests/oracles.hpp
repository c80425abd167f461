#pragma once

// Reference implementations used only by tests.  Each one is written as the
// most literal possible translation of the operation's definition, on purpose
// taking a different route than the production kernels (explicit padded
// copies, full sorts, per-pixel counting) so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "nemc/layers.hpp"
#include "nemc/model.hpp"
#include "nemc/tensor.hpp"

namespace oracle {

using nemc::LayerKind;
using nemc::LayerOp;
using nemc::TensorF32;

// Conv via an explicitly zero-padded copy of the input, one scalar loop nest.
inline TensorF32 conv2d(const LayerOp& op, const TensorF32& x) {
    const auto& ws = op.weights.shape();
    const std::int64_t n = x.dim(0), in_c = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
    const std::int64_t out_c = ws[0], kh = ws[2], kw = ws[3];
    const std::int64_t ph = in_h + 2 * op.padding, pw = in_w + 2 * op.padding;
    std::vector<double> padded(static_cast<std::size_t>(n * in_c * ph * pw), 0.0);
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t c = 0; c < in_c; ++c)
            for (std::int64_t y = 0; y < in_h; ++y)
                for (std::int64_t xx = 0; xx < in_w; ++xx)
                    padded[static_cast<std::size_t>(((b * in_c + c) * ph + y + op.padding) * pw +
                                                    xx + op.padding)] = x.at4(b, c, y, xx);
    const std::int64_t out_h = (ph - kh) / op.stride + 1;
    const std::int64_t out_w = (pw - kw) / op.stride + 1;
    TensorF32 out({n, out_c, out_h, out_w});
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t oc = 0; oc < out_c; ++oc)
            for (std::int64_t oy = 0; oy < out_h; ++oy)
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    double acc = op.bias.size() ? op.bias[oc] : 0.0;
                    for (std::int64_t ic = 0; ic < in_c; ++ic)
                        for (std::int64_t ky = 0; ky < kh; ++ky)
                            for (std::int64_t kx = 0; kx < kw; ++kx)
                                acc += padded[static_cast<std::size_t>(
                                           ((b * in_c + ic) * ph + oy * op.stride + ky) * pw +
                                           ox * op.stride + kx)] *
                                       static_cast<double>(op.weights.at4(oc, ic, ky, kx));
                    out.at4(b, oc, oy, ox) = static_cast<float>(acc);
                }
    return out;
}

inline TensorF32 relu(const TensorF32& x) {
    TensorF32 out(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) out[i] = std::max(0.0f, x[i]);
    return out;
}

inline TensorF32 maxpool(const LayerOp& op, const TensorF32& x) {
    const std::int64_t n = x.dim(0), c = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
    const std::int64_t out_h = (in_h - op.pool_k) / op.pool_stride + 1;
    const std::int64_t out_w = (in_w - op.pool_k) / op.pool_stride + 1;
    TensorF32 out({n, c, out_h, out_w});
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t oy = 0; oy < out_h; ++oy)
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (std::int64_t ky = 0; ky < op.pool_k; ++ky)
                        for (std::int64_t kx = 0; kx < op.pool_k; ++kx)
                            best = std::max(best, x.at4(b, ch, oy * op.pool_stride + ky,
                                                        ox * op.pool_stride + kx));
                    out.at4(b, ch, oy, ox) = best;
                }
    return out;
}

inline TensorF32 linear(const LayerOp& op, const TensorF32& x) {
    const std::int64_t n = x.dim(0), in_f = x.dim(1), out_f = op.weights.dim(0);
    TensorF32 out({n, out_f});
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t o = 0; o < out_f; ++o) {
            double acc = op.bias.size() ? op.bias[o] : 0.0;
            for (std::int64_t i = 0; i < in_f; ++i)
                acc += static_cast<double>(x.at2(b, i)) * static_cast<double>(op.weights.at2(o, i));
            out.at2(b, o) = static_cast<float>(acc);
        }
    return out;
}

inline TensorF32 forward(const nemc::ModelSpec& model, const TensorF32& batch) {
    TensorF32 cur = batch;
    for (const auto& op : model.layers) {
        switch (op.kind) {
            case LayerKind::Conv2d: cur = conv2d(op, cur); break;
            case LayerKind::Relu: cur = relu(cur); break;
            case LayerKind::MaxPool: cur = maxpool(op, cur); break;
            case LayerKind::Flatten: {
                std::int64_t f = 1;
                for (std::size_t i = 1; i < cur.shape().size(); ++i) f *= cur.shape()[i];
                cur = cur.reshaped({cur.dim(0), f});
                break;
            }
            case LayerKind::Linear: cur = linear(op, cur); break;
        }
    }
    return cur;
}

// Central finite differences of a scalar function of the batch.  The
// perturbed coordinate is stored back into the float32 batch, so the divisor
// uses the step that was actually realised after rounding.
inline TensorF32 fd_gradient(const std::function<double(const TensorF32&)>& f, TensorF32 batch,
                             double h) {
    TensorF32 grad(batch.shape());
    for (std::int64_t i = 0; i < batch.size(); ++i) {
        const float orig = batch[i];
        batch[i] = static_cast<float>(static_cast<double>(orig) + h);
        const double up = f(batch);
        const double hi = batch[i];
        batch[i] = static_cast<float>(static_cast<double>(orig) - h);
        const double down = f(batch);
        const double lo = batch[i];
        batch[i] = orig;
        grad[i] = static_cast<float>((up - down) / (hi - lo));
    }
    return grad;
}

// Float64 mirror of the forward pass with no float32 stores anywhere.  The
// production network rounds every activation map to float32, and differencing
// that quantised function at small steps measures rounding noise rather than
// the slope; the network is piecewise linear, so its derivative equals the
// derivative of this exact-arithmetic mirror wherever the two take the same
// relu/pool branches.  Gradient checks difference this version.
struct GridF64 {
    std::vector<std::int64_t> shape;
    std::vector<double> v;

    double& at4(std::int64_t b, std::int64_t c, std::int64_t y, std::int64_t x) {
        return v[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
    double at4(std::int64_t b, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return v[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
};

inline GridF64 to_grid(const TensorF32& x) {
    GridF64 g;
    g.shape = x.shape();
    g.v.assign(x.data(), x.data() + x.size());
    return g;
}

inline GridF64 conv2d_f64(const LayerOp& op, const GridF64& x) {
    const auto& ws = op.weights.shape();
    const std::int64_t n = x.shape[0], in_c = x.shape[1], in_h = x.shape[2], in_w = x.shape[3];
    const std::int64_t out_c = ws[0], kh = ws[2], kw = ws[3];
    const std::int64_t out_h = (in_h + 2 * op.padding - kh) / op.stride + 1;
    const std::int64_t out_w = (in_w + 2 * op.padding - kw) / op.stride + 1;
    GridF64 out{{n, out_c, out_h, out_w},
                std::vector<double>(static_cast<std::size_t>(n * out_c * out_h * out_w))};
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t oc = 0; oc < out_c; ++oc)
            for (std::int64_t oy = 0; oy < out_h; ++oy)
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    double acc = op.bias.size() ? op.bias[oc] : 0.0;
                    for (std::int64_t ic = 0; ic < in_c; ++ic)
                        for (std::int64_t ky = 0; ky < kh; ++ky)
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t iy = oy * op.stride + ky - op.padding;
                                const std::int64_t ix = ox * op.stride + kx - op.padding;
                                if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) continue;
                                acc += x.at4(b, ic, iy, ix) *
                                       static_cast<double>(op.weights.at4(oc, ic, ky, kx));
                            }
                    out.at4(b, oc, oy, ox) = acc;
                }
    return out;
}

inline GridF64 relu_f64(const GridF64& x) {
    GridF64 out = x;
    for (auto& e : out.v) e = std::max(0.0, e);
    return out;
}

inline GridF64 maxpool_f64(const LayerOp& op, const GridF64& x) {
    const std::int64_t n = x.shape[0], c = x.shape[1], in_h = x.shape[2], in_w = x.shape[3];
    const std::int64_t out_h = (in_h - op.pool_k) / op.pool_stride + 1;
    const std::int64_t out_w = (in_w - op.pool_k) / op.pool_stride + 1;
    GridF64 out{{n, c, out_h, out_w},
                std::vector<double>(static_cast<std::size_t>(n * c * out_h * out_w))};
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t oy = 0; oy < out_h; ++oy)
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (std::int64_t ky = 0; ky < op.pool_k; ++ky)
                        for (std::int64_t kx = 0; kx < op.pool_k; ++kx)
                            best = std::max(best, x.at4(b, ch, oy * op.pool_stride + ky,
                                                        ox * op.pool_stride + kx));
                    out.at4(b, ch, oy, ox) = best;
                }
    return out;
}

// Runs layers up to and including `layer` and returns that activation.
inline GridF64 forward_activation_f64(const nemc::ModelSpec& model, const TensorF32& batch,
                                      const std::string& layer) {
    GridF64 cur = to_grid(batch);
    for (const auto& op : model.layers) {
        switch (op.kind) {
            case LayerKind::Conv2d: cur = conv2d_f64(op, cur); break;
            case LayerKind::Relu: cur = relu_f64(cur); break;
            case LayerKind::MaxPool: cur = maxpool_f64(op, cur); break;
            default: throw std::logic_error("f64 oracle only covers spatial layers");
        }
        if (op.name == layer) return cur;
    }
    throw std::logic_error("layer not found: " + layer);
}

// Align-corners bilinear upsample of one H x W plane, all arithmetic in f64.
inline std::vector<double> upsample_plane_f64(const std::vector<double>& src, std::int64_t sh,
                                              std::int64_t sw, std::int64_t th, std::int64_t tw) {
    std::vector<double> out(static_cast<std::size_t>(th * tw));
    for (std::int64_t y = 0; y < th; ++y) {
        const double fy = th == 1 ? 0.0
                                  : static_cast<double>(y) * static_cast<double>(sh - 1) /
                                        static_cast<double>(th - 1);
        std::int64_t y0 = sh == 1 ? 0 : std::min(static_cast<std::int64_t>(fy), sh - 2);
        const double ty = sh == 1 ? 0.0 : fy - static_cast<double>(y0);
        for (std::int64_t x = 0; x < tw; ++x) {
            const double fx = tw == 1 ? 0.0
                                      : static_cast<double>(x) * static_cast<double>(sw - 1) /
                                            static_cast<double>(tw - 1);
            std::int64_t x0 = sw == 1 ? 0 : std::min(static_cast<std::int64_t>(fx), sw - 2);
            const double tx = sw == 1 ? 0.0 : fx - static_cast<double>(x0);
            const std::int64_t x1 = sw == 1 ? x0 : x0 + 1, y1 = sh == 1 ? y0 : y0 + 1;
            const double v00 = src[static_cast<std::size_t>(y0 * sw + x0)];
            const double v01 = src[static_cast<std::size_t>(y0 * sw + x1)];
            const double v10 = src[static_cast<std::size_t>(y1 * sw + x0)];
            const double v11 = src[static_cast<std::size_t>(y1 * sw + x1)];
            const double top = v00 + tx * (v01 - v00);
            const double bot = v10 + tx * (v11 - v10);
            out[static_cast<std::size_t>(y * tw + x)] = top + ty * (bot - top);
        }
    }
    return out;
}

// Nearest-rank top-quantile by full descending sort.
inline float nearest_rank_threshold(std::vector<float> samples, double eta) {
    std::sort(samples.begin(), samples.end(), std::greater<float>());
    const auto idx = static_cast<std::size_t>(eta * static_cast<double>(samples.size()));
    return samples[std::min(idx, samples.size() - 1)];
}

// Dataset-wide IOU by brute-force pixel counting.
inline double iou_by_counting(const std::vector<std::vector<std::uint8_t>>& masks,
                              const std::vector<std::vector<std::uint8_t>>& labels) {
    std::uint64_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < masks.size(); ++i) {
        for (std::size_t p = 0; p < masks[i].size(); ++p) {
            const bool m = masks[i][p] != 0, l = labels[i][p] != 0;
            inter += (m && l) ? 1 : 0;
            uni += (m || l) ? 1 : 0;
        }
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace oracle
