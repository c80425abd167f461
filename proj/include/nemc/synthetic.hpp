#pragma once

// Synthetic probing images: flat gray backgrounds with 1-3 non-overlapping
// concept regions (solid patches, stripe/checker/diagonal textures, a disk,
// a full-width top band) and exact per-pixel masks.  Every pattern is locally
// periodic with no extra noise, so a channel built to respond to one pattern
// responds with one exact value across all of that pattern's interior --
// which lets an activation quantile tie across the whole concept instead of
// picking an arbitrary hottest subset.
//
// Placed regions keep kRegionEdgeInset pixels clear of the image edge, so a
// 3x3 conv window over a region's own pixels never reads zero padding.  The
// top band is the deliberate exception: it hugs the top edge, and the
// detectors that look for it read only color taps, which padding never
// reaches.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nemc/concepts.hpp"
#include "nemc/dataset.hpp"
#include "nemc/errors.hpp"
#include "nemc/rng.hpp"
#include "nemc/tensor.hpp"

namespace nemc {

enum class PainterKind { Solid, VerticalStripes, Checker, Square, Disk, TopBand, DiagonalStripes };

// Margin every placed region keeps from the image edge (top band excepted).
constexpr std::int64_t kRegionEdgeInset = 2;

struct Painter {
    PainterKind kind;
    float r, g, b;   // base color
    float amp;       // texture luminance amplitude (0 for untextured)
    bool landmark;   // landmark shapes are smaller than the patches they share
                     // an image with, so the patch always dominates the label
};

// The three textures carry deliberately disjoint edge-energy signatures (the
// oriented-gradient responses a 3x3 conv with +-1-offset taps can read):
// vertical stripes light up vertical and both diagonal gradients but no
// horizontal one; the 2x2 checker lights up vertical and horizontal but
// neither diagonal; the period-6 diagonal weave lights up vertical,
// horizontal, and exactly one diagonal.  Base colors keep every pattern far
// from the gray background and from each other in hue.
inline const std::vector<std::pair<std::string, Painter>>& painter_table() {
    static const std::vector<std::pair<std::string, Painter>> table = {
        {"red", {PainterKind::Solid, 0.85f, 0.10f, 0.10f, 0.0f, false}},
        {"green", {PainterKind::Solid, 0.10f, 0.80f, 0.15f, 0.0f, false}},
        {"stripes", {PainterKind::VerticalStripes, 0.88f, 0.55f, 0.10f, 0.10f, false}},
        {"checker", {PainterKind::Checker, 0.45f, 0.18f, 0.52f, 0.10f, false}},
        {"box", {PainterKind::Square, 0.88f, 0.84f, 0.10f, 0.0f, true}},
        {"dot", {PainterKind::Disk, 0.85f, 0.10f, 0.80f, 0.0f, true}},
        {"sky", {PainterKind::TopBand, 0.55f, 0.75f, 0.94f, 0.0f, true}},
        {"metal", {PainterKind::DiagonalStripes, 0.28f, 0.40f, 0.72f, 0.10f, true}},
    };
    return table;
}

inline const Painter& painter_for(const std::string& name) {
    for (const auto& [n, p] : painter_table())
        if (n == name) return p;
    throw ConfigError("no painter defined for concept: " + name);
}


// Paints one region into a 3 x H x W image; sets bits in maskPlane (H*W) for
// exactly the painted pixels when given. Returns the painted pixel count.
inline std::int64_t paint_region(TensorF32& img, const Painter& p, std::int64_t x0,
                                 std::int64_t y0, std::int64_t w, std::int64_t h,
                                 std::vector<std::uint8_t>* maskPlane) {
    const std::int64_t H = img.dim(1), W = img.dim(2);
    if (x0 < 0 || y0 < 0 || x0 + w > W || y0 + h > H || w < 1 || h < 1) {
        throw ConfigError("region outside image bounds");
    }
    const double cx = static_cast<double>(x0) + static_cast<double>(w - 1) / 2.0;
    const double cy = static_cast<double>(y0) + static_cast<double>(h - 1) / 2.0;
    const double r2 = (static_cast<double>(w) / 2.0) * (static_cast<double>(w) / 2.0);
    std::int64_t painted = 0;
    for (std::int64_t y = y0; y < y0 + h; ++y) {
        for (std::int64_t x = x0; x < x0 + w; ++x) {
            if (p.kind == PainterKind::Disk) {
                const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
                if (dx * dx + dy * dy > r2) continue;
            }
            float lum = 0.0f;
            switch (p.kind) {
                case PainterKind::VerticalStripes:
                    lum = ((x - x0) % 4 < 2) ? p.amp : -p.amp;
                    break;
                case PainterKind::Checker:
                    lum = (((x - x0) / 2 + (y - y0) / 2) % 2 == 0) ? p.amp : -p.amp;
                    break;
                case PainterKind::DiagonalStripes:
                    // Period 6: a +-1-offset diagonal gradient tap straddles
                    // the stripe boundary, so the pattern stays visible to
                    // 3x3 kernels (a period-4 diagonal cancels exactly).
                    lum = ((x - x0 + y - y0) % 6 < 3) ? p.amp : -p.amp;
                    break;
                default: break;
            }
            img.at3(0, y, x) = p.r + lum;
            img.at3(1, y, x) = p.g + lum;
            img.at3(2, y, x) = p.b + lum;
            if (maskPlane) (*maskPlane)[static_cast<std::size_t>(y * W + x)] = 1;
            ++painted;
        }
    }
    return painted;
}

// A size x size canvas fully covered by the named concept's pattern, on the
// given background (visible only around a disk).  Used to measure what the
// network sees inside a region's interior.
inline TensorF32 paint_swatch(const std::string& name, std::int64_t size, float bg) {
    TensorF32 img({3, size, size}, bg);
    const Painter& p = painter_for(name);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(size * size), 0);
    paint_region(img, p, 0, 0, size, size, &mask);
    for (std::int64_t i = 0; i < img.size(); ++i) img[i] = std::clamp(img[i], 0.0f, 1.0f);
    return img;
}

namespace detail {

struct Box {
    std::int64_t x0, y0, w, h;
};

inline bool boxes_clash(const Box& a, const Box& b, std::int64_t gap) {
    return a.x0 < b.x0 + b.w + gap && b.x0 < a.x0 + a.w + gap && a.y0 < b.y0 + b.h + gap &&
           b.y0 < a.y0 + a.h + gap;
}

// Uniform choice among all positions where a w x h box avoids every placed
// box by `gap` pixels and stays `inset` pixels inside the image. Exhaustive,
// so feasibility is exact.
inline std::optional<Box> place_box(Rng& rng, std::int64_t W, std::int64_t H, std::int64_t w,
                                    std::int64_t h, const std::vector<Box>& placed,
                                    std::int64_t gap, std::int64_t inset) {
    if (w + 2 * inset > W || h + 2 * inset > H) return std::nullopt;
    std::vector<Box> feasible;
    for (std::int64_t y = inset; y + h <= H - inset; ++y) {
        for (std::int64_t x = inset; x + w <= W - inset; ++x) {
            const Box cand{x, y, w, h};
            bool ok = true;
            for (const auto& other : placed) {
                if (boxes_clash(cand, other, gap)) {
                    ok = false;
                    break;
                }
            }
            if (ok) feasible.push_back(cand);
        }
    }
    if (feasible.empty()) return std::nullopt;
    return feasible[static_cast<std::size_t>(rng.next_below(feasible.size()))];
}

inline std::int64_t scaled(std::int64_t size, double coef) {
    return std::max<std::int64_t>(2, static_cast<std::int64_t>(std::lround(coef * size)));
}

}  // namespace detail

// One footprint (width x height, plus whether it hugs the top edge) a
// concept's region can occupy in generated images.  Signature measurement
// sweeps all of them so detector design sees region boundaries exactly as
// they will occur: texture concepts list every side length the generator can
// draw (the pattern column at the far boundary depends on size mod period),
// solid concepts list one since all their boundaries look alike.
struct RegionGeometry {
    std::int64_t w = 0, h = 0;
    bool topAnchored = false;
};

inline std::vector<RegionGeometry> region_geometries(const std::string& name, std::int64_t S) {
    using detail::scaled;
    const Painter& p = painter_for(name);
    const std::int64_t patchMin = scaled(S, 0.47), patchMax = std::max(patchMin, scaled(S, 0.53));
    const std::int64_t lmMin = scaled(S, 0.34), lmMax = std::max(lmMin, scaled(S, 0.41));
    const std::int64_t bandMin = scaled(S, 0.16), bandMax = std::max(bandMin, scaled(S, 0.19));
    std::int64_t diskSide = scaled(S, 0.41);
    if (diskSide % 2 == 0) ++diskSide;
    std::vector<RegionGeometry> out;
    switch (p.kind) {
        case PainterKind::TopBand:
            for (std::int64_t h = bandMin; h <= bandMax; ++h) out.push_back({S, h, true});
            break;
        case PainterKind::Disk:
            out.push_back({diskSide, diskSide, false});
            break;
        default: {
            // Landmark squares keep to the landmark range; patches appear at
            // full size and shrunken to secondary-region sizes.
            const std::int64_t lo = p.landmark ? lmMin : std::min(lmMin, patchMin);
            const std::int64_t hi = p.landmark ? lmMax : patchMax;
            if (p.amp > 0.0f) {
                for (std::int64_t s = lo; s <= hi; ++s) out.push_back({s, s, false});
            } else {
                out.push_back({hi, hi, false});
            }
            break;
        }
    }
    return out;
}

// One region of the named concept painted at a controlled position on a flat
// background; top-anchored geometries ignore the offsets and hug the top
// edge the way the generator draws them.
struct ProbeRender {
    TensorF32 img;                   // 3 x S x S
    std::vector<std::uint8_t> mask;  // S*S, 1 on region pixels
};

inline ProbeRender paint_probe_render(const std::string& name, std::int64_t S, float bg,
                                      const RegionGeometry& g, std::int64_t x0, std::int64_t y0) {
    ProbeRender out{TensorF32({3, S, S}, bg),
                    std::vector<std::uint8_t>(static_cast<std::size_t>(S * S), 0)};
    if (g.topAnchored) {
        x0 = 0;
        y0 = 0;
    }
    paint_region(out.img, painter_for(name), x0, y0, g.w, g.h, &out.mask);
    for (std::int64_t i = 0; i < out.img.size(); ++i) {
        out.img[i] = std::clamp(out.img[i], 0.0f, 1.0f);
    }
    return out;
}

// Placements a measurement sweep must render for a region of the given
// extent along one axis.  Around the centered base (rounded to the pooling
// period) it slides by 0..phases-1 so every alignment of the pattern against
// the pooling grids occurs; on top of that come the border-flush positions,
// where painted pixels sit close enough to the image edge that the bottom
// conv's zero padding boosts their neighbourhood's edge energies into
// profiles found nowhere in the interior.  Placements the generator itself
// obeys the same inset for, so together these cover every distance-to-border
// the region can take modulo the pooling period.
inline std::vector<std::int64_t> probe_offsets(std::int64_t S, std::int64_t extent,
                                               std::int64_t phases) {
    const std::int64_t lo = kRegionEdgeInset;
    const std::int64_t hi = std::max(lo, S - kRegionEdgeInset - extent);
    const std::int64_t base = ((S - extent) / 2) & ~std::int64_t{3};
    std::set<std::int64_t> offs;
    for (std::int64_t d = 0; d < phases; ++d) offs.insert(std::clamp(base + d, lo, hi));
    for (std::int64_t o : {lo, lo + 1, hi - 1, hi}) offs.insert(std::clamp(o, lo, hi));
    return {offs.begin(), offs.end()};
}

// Side of the smallest square patch that outweighs `area` by the dominance
// factor.  The factor is mild: a 13px landmark plus its dominating patch must
// still fit a 32px canvas with the edge inset and separation gap.
inline std::int64_t dominant_side(std::int64_t area) {
    return static_cast<std::int64_t>(
        std::ceil(std::sqrt(1.1 * static_cast<double>(area)) - 1e-9));
}

// Pixel count of the disk a side x side box inscribes (same geometry as the
// disk painter).
inline std::int64_t disk_pixel_count(std::int64_t side) {
    const double c = static_cast<double>(side - 1) / 2.0;
    const double r2 = (static_cast<double>(side) / 2.0) * (static_cast<double>(side) / 2.0);
    std::int64_t count = 0;
    for (std::int64_t y = 0; y < side; ++y)
        for (std::int64_t x = 0; x < side; ++x) {
            const double dx = static_cast<double>(x) - c, dy = static_cast<double>(y) - c;
            if (dx * dx + dy * dy <= r2) ++count;
        }
    return count;
}

inline ProbingDataset generate_synthetic_dataset(const ConceptSet& set, std::int64_t n,
                                                 std::int64_t imageSize, std::uint64_t seed) {
    set.validate();
    if (n < 1) throw ConfigError("need at least one image");
    if (imageSize < 16) {
        throw ConfigError("image too small for requested regions: " + std::to_string(imageSize));
    }
    const std::int64_t S = imageSize, K = set.size();

    std::vector<std::int32_t> patchIds, landmarkIds;
    for (const auto& c : set.concepts) {
        (painter_for(c.name).landmark ? landmarkIds : patchIds).push_back(c.id);
    }

    using detail::scaled;
    const std::int64_t patchMin = scaled(S, 0.47), patchMax = std::max(patchMin, scaled(S, 0.53));
    const std::int64_t lmMin = scaled(S, 0.34), lmMax = std::max(lmMin, scaled(S, 0.41));
    const std::int64_t bandMin = scaled(S, 0.16), bandMax = std::max(bandMin, scaled(S, 0.19));
    std::int64_t diskSide = scaled(S, 0.41);
    if (diskSide % 2 == 0) ++diskSide;
    const std::int64_t gap = 1;

    ProbingDataset ds;
    ds.images = TensorF32({n, 3, S, S});
    ds.masks.shape = {n, K, S, S};
    ds.masks.data.assign(static_cast<std::size_t>(n * K * S * S), 0);
    ds.labels.assign(static_cast<std::size_t>(n), 0);
    ds.concepts = set;
    ds.provenance.generation_seed = seed;

    for (std::int64_t i = 0; i < n; ++i) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i), 1);
        TensorF32 img({3, S, S}, static_cast<float>(0.45 + 0.10 * rng.next_unit()));
        std::vector<std::vector<std::uint8_t>> planes(
            static_cast<std::size_t>(K), std::vector<std::uint8_t>(static_cast<std::size_t>(S * S), 0));
        std::vector<detail::Box> placed;

        auto paint = [&](std::int32_t id, const detail::Box& b) {
            const std::int64_t area = paint_region(
                img, painter_for(set.at(id).name), b.x0, b.y0, b.w, b.h,
                &planes[static_cast<std::size_t>(id)]);
            placed.push_back(b);
            return area;
        };

        const bool landmarkImage = !landmarkIds.empty() &&
                                   (patchIds.empty() || rng.next_unit() < 0.36);
        if (landmarkImage) {
            const std::int32_t lm =
                landmarkIds[static_cast<std::size_t>(rng.next_below(landmarkIds.size()))];
            const PainterKind kind = painter_for(set.at(lm).name).kind;
            if (patchIds.empty()) {
                // Landmark-only vocabulary: one landmark per image.
                if (kind == PainterKind::TopBand) {
                    const std::int64_t h =
                        bandMin + static_cast<std::int64_t>(
                                      rng.next_below(static_cast<std::uint64_t>(bandMax - bandMin + 1)));
                    paint(lm, {0, 0, S, h});
                } else {
                    const std::int64_t side =
                        kind == PainterKind::Disk
                            ? diskSide
                            : lmMin + static_cast<std::int64_t>(rng.next_below(
                                          static_cast<std::uint64_t>(lmMax - lmMin + 1)));
                    const auto spot = detail::place_box(rng, S, S, side, side, placed, gap, kRegionEdgeInset);
                    if (!spot) throw ConfigError("image too small for requested regions");
                    paint(lm, *spot);
                }
            } else {
                const std::int32_t pc =
                    patchIds[static_cast<std::size_t>(rng.next_below(patchIds.size()))];
                // The landmark's pixel area is known analytically, so the
                // dominating patch can be sized up front and both boxes
                // drawn jointly; unlucky draws are redrawn.
                std::int64_t lmSide = 0, lmArea = 0, bandH = 0;
                if (kind == PainterKind::TopBand) {
                    bandH = bandMin + static_cast<std::int64_t>(
                                          rng.next_below(static_cast<std::uint64_t>(bandMax - bandMin + 1)));
                    lmArea = S * bandH;
                } else if (kind == PainterKind::Disk) {
                    lmSide = diskSide;
                    lmArea = disk_pixel_count(diskSide);
                } else {
                    lmSide = lmMin + static_cast<std::int64_t>(
                                         rng.next_below(static_cast<std::uint64_t>(lmMax - lmMin + 1)));
                    lmArea = lmSide * lmSide;
                }
                const std::int64_t lo = dominant_side(lmArea);
                const std::int64_t hi = std::max(lo, patchMax);
                if (lo + 2 * kRegionEdgeInset > S) {
                    throw ConfigError("image too small for requested regions");
                }
                bool done = false;
                // The tightest landmark+patch combination fits only when the
                // patch hugs an image edge, so placement needs many retries.
                for (int attempt = 0; attempt < 256 && !done; ++attempt) {
                    const std::int64_t patchSide =
                        lo + static_cast<std::int64_t>(
                                 rng.next_below(static_cast<std::uint64_t>(hi - lo + 1)));
                    std::vector<detail::Box> trial;
                    if (kind == PainterKind::TopBand) trial.push_back({0, 0, S, bandH});
                    const auto patchSpot =
                        detail::place_box(rng, S, S, patchSide, patchSide, trial, gap, kRegionEdgeInset);
                    if (!patchSpot) continue;
                    trial.push_back(*patchSpot);
                    detail::Box lmBox{0, 0, S, bandH};
                    if (kind != PainterKind::TopBand) {
                        const auto lmSpot = detail::place_box(
                            rng, S, S, lmSide, lmSide, {trial.back()}, gap, kRegionEdgeInset);
                        if (!lmSpot) continue;
                        lmBox = *lmSpot;
                    }
                    paint(pc, *patchSpot);
                    paint(lm, lmBox);
                    done = true;
                }
                if (!done) throw ConfigError("image too small for requested regions");
            }
        } else {
            // 1-3 patch regions, strictly shrinking so the first dominates.
            const double u = rng.next_unit();
            const std::int64_t want = u < 0.92 ? 1 : (u < 0.98 ? 2 : 3);
            std::vector<std::int32_t> pool = patchIds;
            std::int64_t firstSide = 0;
            for (std::int64_t k = 0; k < want && !pool.empty(); ++k) {
                const std::size_t pick = static_cast<std::size_t>(rng.next_below(pool.size()));
                const std::int32_t id = pool[pick];
                pool.erase(pool.begin() + static_cast<std::int64_t>(pick));
                std::int64_t side;
                if (k == 0) {
                    side = patchMin + static_cast<std::int64_t>(rng.next_below(
                                          static_cast<std::uint64_t>(patchMax - patchMin + 1)));
                    firstSide = side;
                } else {
                    const std::int64_t cap =
                        std::min(lmMax, static_cast<std::int64_t>(
                                            std::floor(static_cast<double>(firstSide) /
                                                       std::sqrt(1.35))));
                    if (cap < lmMin) break;
                    side = lmMin + static_cast<std::int64_t>(
                                       rng.next_below(static_cast<std::uint64_t>(cap - lmMin + 1)));
                }
                const auto spot = detail::place_box(rng, S, S, side, side, placed, gap, kRegionEdgeInset);
                if (!spot) {
                    if (k == 0) throw ConfigError("image too small for requested regions");
                    break;  // later regions are optional
                }
                paint(id, *spot);
            }
        }

        for (std::int64_t p = 0; p < img.size(); ++p) img[p] = std::clamp(img[p], 0.0f, 1.0f);

        // Label: dominant concept by painted area, ties toward lower id.
        std::int64_t bestArea = -1;
        std::int32_t bestId = 0;
        for (std::int32_t c = 0; c < K; ++c) {
            std::int64_t area = 0;
            for (const auto v : planes[static_cast<std::size_t>(c)]) area += v;
            if (area > bestArea) {
                bestArea = area;
                bestId = c;
            }
        }
        ds.labels[static_cast<std::size_t>(i)] = bestId;

        std::copy(img.data(), img.data() + img.size(), ds.images.data() + i * img.size());
        for (std::int32_t c = 0; c < K; ++c) {
            std::copy(planes[static_cast<std::size_t>(c)].begin(),
                      planes[static_cast<std::size_t>(c)].end(),
                      ds.masks.data.begin() + (i * K + c) * S * S);
        }
    }
    return ds;
}

}  // namespace nemc
