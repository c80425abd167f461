#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "nemc/errors.hpp"
#include "nemc/tensor.hpp"

namespace nemc {

enum class LayerKind { Conv2d, Relu, MaxPool, Flatten, Linear };

inline std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Linear: return "linear";
    }
    return "?";
}

inline LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "relu") return LayerKind::Relu;
    if (s == "maxpool") return LayerKind::MaxPool;
    if (s == "flatten") return LayerKind::Flatten;
    if (s == "linear") return LayerKind::Linear;
    throw IntegrityError("unknown_layer_kind", "unknown layer kind: " + s);
}

// One layer of the fixed vocabulary.  Conv weights are outC x inC x kh x kw,
// linear weights are out x in; biases are rank-1.  Stride/padding apply to
// conv, k/stride to maxpool.  Unused fields stay default for other kinds.
struct LayerOp {
    std::string name;
    LayerKind kind = LayerKind::Relu;
    TensorF32 weights;
    TensorF32 bias;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t pool_k = 2;
    std::int64_t pool_stride = 2;
};

inline std::vector<std::int64_t> layer_output_shape(const LayerOp& op,
                                                    const std::vector<std::int64_t>& in) {
    switch (op.kind) {
        case LayerKind::Conv2d: {
            if (in.size() != 4) throw ConfigError("conv2d expects NCHW input");
            const auto& w = op.weights.shape();
            if (w.size() != 4) throw ConfigError("conv2d weights must be outC x inC x kh x kw");
            if (in[1] != w[1]) {
                throw ConfigError("conv2d input channels " + std::to_string(in[1]) +
                                  " do not match weight channels " + std::to_string(w[1]));
            }
            const std::int64_t h = (in[2] + 2 * op.padding - w[2]) / op.stride + 1;
            const std::int64_t wd = (in[3] + 2 * op.padding - w[3]) / op.stride + 1;
            if (h <= 0 || wd <= 0) throw ConfigError("conv2d kernel does not fit input");
            return {in[0], w[0], h, wd};
        }
        case LayerKind::Relu:
            return in;
        case LayerKind::MaxPool: {
            if (in.size() != 4) throw ConfigError("maxpool expects NCHW input");
            const std::int64_t h = (in[2] - op.pool_k) / op.pool_stride + 1;
            const std::int64_t w = (in[3] - op.pool_k) / op.pool_stride + 1;
            if (h <= 0 || w <= 0) throw ConfigError("maxpool window does not fit input");
            return {in[0], in[1], h, w};
        }
        case LayerKind::Flatten: {
            if (in.size() < 2) throw ConfigError("flatten expects batched input");
            std::int64_t f = 1;
            for (std::size_t i = 1; i < in.size(); ++i) f *= in[i];
            return {in[0], f};
        }
        case LayerKind::Linear: {
            if (in.size() != 2) throw ConfigError("linear expects N x F input");
            const auto& w = op.weights.shape();
            if (w.size() != 2) throw ConfigError("linear weights must be out x in");
            if (in[1] != w[1]) {
                throw ConfigError("linear input width " + std::to_string(in[1]) +
                                  " does not match weight width " + std::to_string(w[1]));
            }
            return {in[0], w[0]};
        }
    }
    throw ConfigError("unreachable layer kind");
}

// ---------------------------------------------------------------------------
// Forward kernels.  Sums accumulate in double and round to float on store.
// ---------------------------------------------------------------------------

inline TensorF32 conv2d_forward(const LayerOp& op, const TensorF32& x) {
    const auto out_shape = layer_output_shape(op, x.shape());
    TensorF32 y(out_shape);
    const auto& ws = op.weights.shape();
    const std::int64_t n = x.dim(0), in_c = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
    const std::int64_t out_c = ws[0], kh = ws[2], kw = ws[3];
    const std::int64_t out_h = out_shape[2], out_w = out_shape[3];
    const float* xd = x.data();
    const float* wd = op.weights.data();
    const float* bd = op.bias.size() ? op.bias.data() : nullptr;
    float* yd = y.data();
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t oc = 0; oc < out_c; ++oc) {
            const double bias = bd ? static_cast<double>(bd[oc]) : 0.0;
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                const std::int64_t y0 = oy * op.stride - op.padding;
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    const std::int64_t x0 = ox * op.stride - op.padding;
                    double acc = bias;
                    for (std::int64_t ic = 0; ic < in_c; ++ic) {
                        const float* xc = xd + ((b * in_c + ic) * in_h) * in_w;
                        const float* wc = wd + ((oc * in_c + ic) * kh) * kw;
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            const std::int64_t iy = y0 + ky;
                            if (iy < 0 || iy >= in_h) continue;
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t ix = x0 + kx;
                                if (ix < 0 || ix >= in_w) continue;
                                acc += static_cast<double>(xc[iy * in_w + ix]) *
                                       static_cast<double>(wc[ky * kw + kx]);
                            }
                        }
                    }
                    yd[((b * out_c + oc) * out_h + oy) * out_w + ox] = static_cast<float>(acc);
                }
            }
        }
    }
    return y;
}

inline TensorF32 relu_forward(const TensorF32& x) {
    TensorF32 y(x.shape());
    const float* xd = x.data();
    float* yd = y.data();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) yd[i] = xd[i] > 0.0f ? xd[i] : 0.0f;
    return y;
}

inline TensorF32 maxpool_forward(const LayerOp& op, const TensorF32& x) {
    const auto out_shape = layer_output_shape(op, x.shape());
    TensorF32 y(out_shape);
    const std::int64_t n = x.dim(0), c = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
    const std::int64_t out_h = out_shape[2], out_w = out_shape[3];
    const float* xd = x.data();
    float* yd = y.data();
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const float* xc = xd + ((b * c + ch) * in_h) * in_w;
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    const std::int64_t y0 = oy * op.pool_stride;
                    const std::int64_t x0 = ox * op.pool_stride;
                    float best = xc[y0 * in_w + x0];
                    for (std::int64_t ky = 0; ky < op.pool_k; ++ky) {
                        for (std::int64_t kx = 0; kx < op.pool_k; ++kx) {
                            const float v = xc[(y0 + ky) * in_w + (x0 + kx)];
                            if (v > best) best = v;
                        }
                    }
                    yd[((b * c + ch) * out_h + oy) * out_w + ox] = best;
                }
            }
        }
    }
    return y;
}

inline TensorF32 flatten_forward(const TensorF32& x) {
    std::int64_t f = 1;
    for (std::size_t i = 1; i < x.shape().size(); ++i) f *= x.shape()[i];
    return x.reshaped({x.dim(0), f});
}

inline TensorF32 linear_forward(const LayerOp& op, const TensorF32& x) {
    const auto out_shape = layer_output_shape(op, x.shape());
    TensorF32 y(out_shape);
    const std::int64_t n = x.dim(0), in_f = x.dim(1), out_f = out_shape[1];
    const float* xd = x.data();
    const float* wd = op.weights.data();
    const float* bd = op.bias.size() ? op.bias.data() : nullptr;
    float* yd = y.data();
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t o = 0; o < out_f; ++o) {
            double acc = bd ? static_cast<double>(bd[o]) : 0.0;
            const float* wr = wd + o * in_f;
            const float* xr = xd + b * in_f;
            for (std::int64_t i = 0; i < in_f; ++i) {
                acc += static_cast<double>(xr[i]) * static_cast<double>(wr[i]);
            }
            yd[b * out_f + o] = static_cast<float>(acc);
        }
    }
    return y;
}

inline TensorF32 layer_forward(const LayerOp& op, const TensorF32& x) {
    switch (op.kind) {
        case LayerKind::Conv2d: return conv2d_forward(op, x);
        case LayerKind::Relu: return relu_forward(x);
        case LayerKind::MaxPool: return maxpool_forward(op, x);
        case LayerKind::Flatten: return flatten_forward(x);
        case LayerKind::Linear: return linear_forward(op, x);
    }
    throw ConfigError("unreachable layer kind");
}

// ---------------------------------------------------------------------------
// Backward kernels (gradient w.r.t. layer input only; weights are fixed).
// Accumulation in double.  Relu uses subgradient 0 at the kink; maxpool
// routes the full gradient to the first maximal element in scan order.
// ---------------------------------------------------------------------------

inline TensorF32 conv2d_backward_input(const LayerOp& op, const TensorF32& x,
                                       const TensorF32& d_out) {
    TensorF32 acc_store(x.shape());
    std::vector<double> acc(static_cast<std::size_t>(x.size()), 0.0);
    const auto& ws = op.weights.shape();
    const std::int64_t n = x.dim(0), in_c = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
    const std::int64_t out_c = ws[0], kh = ws[2], kw = ws[3];
    const std::int64_t out_h = d_out.dim(2), out_w = d_out.dim(3);
    const float* gd = d_out.data();
    const float* wd = op.weights.data();
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t oc = 0; oc < out_c; ++oc) {
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                const std::int64_t y0 = oy * op.stride - op.padding;
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    const std::int64_t x0 = ox * op.stride - op.padding;
                    const double g = gd[((b * out_c + oc) * out_h + oy) * out_w + ox];
                    if (g == 0.0) continue;
                    for (std::int64_t ic = 0; ic < in_c; ++ic) {
                        const float* wc = wd + ((oc * in_c + ic) * kh) * kw;
                        double* ac = acc.data() + ((b * in_c + ic) * in_h) * in_w;
                        for (std::int64_t ky = 0; ky < kh; ++ky) {
                            const std::int64_t iy = y0 + ky;
                            if (iy < 0 || iy >= in_h) continue;
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t ix = x0 + kx;
                                if (ix < 0 || ix >= in_w) continue;
                                ac[iy * in_w + ix] += g * static_cast<double>(wc[ky * kw + kx]);
                            }
                        }
                    }
                }
            }
        }
    }
    float* out = acc_store.data();
    for (std::int64_t i = 0; i < acc_store.size(); ++i) out[i] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
    return acc_store;
}

inline TensorF32 relu_backward(const TensorF32& x, const TensorF32& d_out) {
    TensorF32 d_in(x.shape());
    const float* xd = x.data();
    const float* gd = d_out.data();
    float* dd = d_in.data();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) dd[i] = xd[i] > 0.0f ? gd[i] : 0.0f;
    return d_in;
}

inline TensorF32 maxpool_backward(const LayerOp& op, const TensorF32& x, const TensorF32& d_out) {
    TensorF32 d_in(x.shape());
    std::vector<double> acc(static_cast<std::size_t>(x.size()), 0.0);
    const std::int64_t n = x.dim(0), c = x.dim(1), in_h = x.dim(2), in_w = x.dim(3);
    const std::int64_t out_h = d_out.dim(2), out_w = d_out.dim(3);
    const float* xd = x.data();
    const float* gd = d_out.data();
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const float* xc = xd + ((b * c + ch) * in_h) * in_w;
            double* ac = acc.data() + ((b * c + ch) * in_h) * in_w;
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    const std::int64_t y0 = oy * op.pool_stride;
                    const std::int64_t x0 = ox * op.pool_stride;
                    std::int64_t best_y = y0, best_x = x0;
                    float best = xc[y0 * in_w + x0];
                    for (std::int64_t ky = 0; ky < op.pool_k; ++ky) {
                        for (std::int64_t kx = 0; kx < op.pool_k; ++kx) {
                            const float v = xc[(y0 + ky) * in_w + (x0 + kx)];
                            if (v > best) {
                                best = v;
                                best_y = y0 + ky;
                                best_x = x0 + kx;
                            }
                        }
                    }
                    ac[best_y * in_w + best_x] +=
                        static_cast<double>(gd[((b * c + ch) * out_h + oy) * out_w + ox]);
                }
            }
        }
    }
    float* out = d_in.data();
    for (std::int64_t i = 0; i < d_in.size(); ++i) out[i] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
    return d_in;
}

inline TensorF32 linear_backward_input(const LayerOp& op, const TensorF32& x,
                                       const TensorF32& d_out) {
    TensorF32 d_in(x.shape());
    const std::int64_t n = x.dim(0), in_f = x.dim(1), out_f = d_out.dim(1);
    const float* gd = d_out.data();
    const float* wd = op.weights.data();
    float* dd = d_in.data();
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t i = 0; i < in_f; ++i) {
            double acc = 0.0;
            for (std::int64_t o = 0; o < out_f; ++o) {
                acc += static_cast<double>(gd[b * out_f + o]) * static_cast<double>(wd[o * in_f + i]);
            }
            dd[b * in_f + i] = static_cast<float>(acc);
        }
    }
    return d_in;
}

inline TensorF32 layer_backward_input(const LayerOp& op, const TensorF32& x,
                                      const TensorF32& d_out) {
    switch (op.kind) {
        case LayerKind::Conv2d: return conv2d_backward_input(op, x, d_out);
        case LayerKind::Relu: return relu_backward(x, d_out);
        case LayerKind::MaxPool: return maxpool_backward(op, x, d_out);
        case LayerKind::Flatten: return d_out.reshaped(x.shape());
        case LayerKind::Linear: return linear_backward_input(op, x, d_out);
    }
    throw ConfigError("unreachable layer kind");
}

}  // namespace nemc
