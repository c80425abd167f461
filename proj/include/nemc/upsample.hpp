#pragma once

#include <cstdint>
#include <vector>

#include "nemc/errors.hpp"
#include "nemc/tensor.hpp"

namespace nemc {

// Bilinear upsampling of a single-channel H x W map to target_h x target_w,
// align-corners convention: output corners sample source corners exactly and
// interior coordinates scale by (src-1)/(dst-1).  Interpolation is written in
// lerp form a + t*(b-a) so regions of equal source values stay bit-exact
// (no weight-sum rounding), which downstream thresholding relies on.
//
// Degenerate source extents (h==1 or w==1) broadcast along that axis.
// Target smaller than source is an error: this is an upsampler.

struct BilinearTap {
    std::int64_t lo;
    std::int64_t hi;
    double frac;  // position between lo and hi
};

inline std::vector<BilinearTap> bilinear_axis_taps(std::int64_t src, std::int64_t dst) {
    std::vector<BilinearTap> taps(static_cast<std::size_t>(dst));
    for (std::int64_t i = 0; i < dst; ++i) {
        if (src == 1 || dst == 1) {
            taps[static_cast<std::size_t>(i)] = {0, 0, 0.0};
            continue;
        }
        const double pos = static_cast<double>(i) * static_cast<double>(src - 1) /
                           static_cast<double>(dst - 1);
        std::int64_t lo = static_cast<std::int64_t>(pos);
        if (lo > src - 2) lo = src - 2;
        taps[static_cast<std::size_t>(i)] = {lo, lo + 1, pos - static_cast<double>(lo)};
    }
    return taps;
}

inline TensorF32 bilinear_upsample(const TensorF32& src, std::int64_t target_h,
                                   std::int64_t target_w) {
    if (src.rank() != 2) throw std::invalid_argument("bilinear_upsample expects an H x W map");
    const std::int64_t h = src.dim(0), w = src.dim(1);
    if (target_h < h || target_w < w) {
        throw std::invalid_argument("bilinear_upsample target must be at least the source size");
    }
    const auto ty = bilinear_axis_taps(h, target_h);
    const auto tx = bilinear_axis_taps(w, target_w);
    TensorF32 out({target_h, target_w});
    const float* sd = src.data();
    float* od = out.data();
    for (std::int64_t y = 0; y < target_h; ++y) {
        const auto& ay = ty[static_cast<std::size_t>(y)];
        for (std::int64_t x = 0; x < target_w; ++x) {
            const auto& ax = tx[static_cast<std::size_t>(x)];
            const double v00 = sd[ay.lo * w + ax.lo];
            const double v01 = sd[ay.lo * w + ax.hi];
            const double v10 = sd[ay.hi * w + ax.lo];
            const double v11 = sd[ay.hi * w + ax.hi];
            const double top = v00 + ax.frac * (v01 - v00);
            const double bot = v10 + ax.frac * (v11 - v10);
            od[y * target_w + x] = static_cast<float>(top + ay.frac * (bot - top));
        }
    }
    return out;
}

// Adjoint of bilinear_upsample: scatters an input-resolution gradient back to
// source cells with the same interpolation weights.  Needed for gradients of
// objectives defined over upsampled activation maps.
inline TensorF32 bilinear_upsample_adjoint(const TensorF32& grad_out, std::int64_t src_h,
                                           std::int64_t src_w) {
    if (grad_out.rank() != 2) throw std::invalid_argument("adjoint expects an H x W gradient");
    const std::int64_t gh = grad_out.dim(0), gw = grad_out.dim(1);
    if (gh < src_h || gw < src_w) {
        throw std::invalid_argument("adjoint target must be at least the source size");
    }
    const auto ty = bilinear_axis_taps(src_h, gh);
    const auto tx = bilinear_axis_taps(src_w, gw);
    std::vector<double> acc(static_cast<std::size_t>(src_h * src_w), 0.0);
    const float* gd = grad_out.data();
    for (std::int64_t y = 0; y < gh; ++y) {
        const auto& ay = ty[static_cast<std::size_t>(y)];
        for (std::int64_t x = 0; x < gw; ++x) {
            const auto& ax = tx[static_cast<std::size_t>(x)];
            const double g = gd[y * gw + x];
            if (g == 0.0) continue;
            const double wy_hi = ay.frac, wy_lo = 1.0 - ay.frac;
            const double wx_hi = ax.frac, wx_lo = 1.0 - ax.frac;
            acc[static_cast<std::size_t>(ay.lo * src_w + ax.lo)] += g * wy_lo * wx_lo;
            if (ax.hi != ax.lo) acc[static_cast<std::size_t>(ay.lo * src_w + ax.hi)] += g * wy_lo * wx_hi;
            if (ay.hi != ay.lo) acc[static_cast<std::size_t>(ay.hi * src_w + ax.lo)] += g * wy_hi * wx_lo;
            if (ay.hi != ay.lo && ax.hi != ax.lo) {
                acc[static_cast<std::size_t>(ay.hi * src_w + ax.hi)] += g * wy_hi * wx_hi;
            }
        }
    }
    TensorF32 out({src_h, src_w});
    float* od = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) od[i] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
    return out;
}

}  // namespace nemc
