#pragma once

// Planted-concept model builder.
//
// Builds a small fixed-architecture CNN (three conv/relu/maxpool blocks plus
// a linear head) in which chosen channels are hand-constructed detectors for
// named synthetic concepts.  Each detector is a linear filter over carrier
// features, normalized to unit L1 weight, whose decision margin -- the gap
// between its own concept's feature signature and the nearest rival
// signature -- is settled into a per-layer band.  The margin therefore states
// exactly how much input perturbation the channel absorbs before its top
// activations can migrate to a rival concept, which is what corruption
// experiments need as ground truth.
//
// Channel roles per layer:
//   - carriers: color passthroughs, relu-split oriented luminance gradients
//     (merged into edge energies one layer up), and a border-ring indicator
//     that peaks where conv padding hangs off the image edge.  Detectors at
//     deeper layers read carriers only.
//   - planted detectors: placed at the exact channels the plant requests.
//   - evidence channels (deepest conv only): strong re-detectors of every
//     shallow-planted concept, wired into the classifier head so accuracy
//     does not ride on the deliberately weak planted landmarks.
//   - decoys: south-facing luminance edges (plus per-seed jitter) whose top
//     activations hug the bottom image border, where no generated concept
//     region concentrates; dissection leaves them below any sane score floor.
//
// Detector filters and carriers depend only on the concept vocabulary; the
// build seed jitters decoy channels alone.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nemc/concepts.hpp"
#include "nemc/errors.hpp"
#include "nemc/layers.hpp"
#include "nemc/model.hpp"
#include "nemc/rng.hpp"
#include "nemc/synthetic.hpp"
#include "nemc/tensor.hpp"

namespace nemc {

enum class DetectorKind { ColorMatchedFilter, OrientedEdge, TextureFrequency };

inline std::string detector_kind_name(DetectorKind k) {
    switch (k) {
        case DetectorKind::ColorMatchedFilter: return "color-matched-filter";
        case DetectorKind::OrientedEdge: return "oriented-edge";
        case DetectorKind::TextureFrequency: return "texture-frequency";
    }
    throw ConfigError("bad detector kind value");
}

inline DetectorKind detector_kind_from_name(const std::string& s) {
    if (s == "color-matched-filter") return DetectorKind::ColorMatchedFilter;
    if (s == "oriented-edge") return DetectorKind::OrientedEdge;
    if (s == "texture-frequency") return DetectorKind::TextureFrequency;
    throw ConfigError("unknown detector kind: " + s);
}

struct PlantedNeuron {
    NeuronAddress neuron;
    std::int32_t concept_id = 0;
    DetectorKind kind = DetectorKind::ColorMatchedFilter;
};

struct PlantSpec {
    std::vector<PlantedNeuron> planted;
    std::int64_t decoy_channels = 2;  // decoy channels added to every conv layer
    double weight_noise = 0.05;       // scale of the per-seed jitter on decoy filters
};

// ---------------------------------------------------------------------------
// Plant spec serialization.  Concepts are stored by name so the file stays
// readable and survives vocabulary reorderings that keep names stable.
// ---------------------------------------------------------------------------

inline nlohmann::json plant_spec_to_json(const PlantSpec& plant, const ConceptSet& concepts) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : plant.planted) {
        arr.push_back({{"neuron", p.neuron.to_string()},
                       {"concept", concepts.at(p.concept_id).name},
                       {"kind", detector_kind_name(p.kind)}});
    }
    return nlohmann::json{{"planted", arr},
                          {"decoy_channels", plant.decoy_channels},
                          {"weight_noise", plant.weight_noise}};
}

inline PlantSpec plant_spec_from_json(const nlohmann::json& j, const ConceptSet& concepts) {
    if (!j.is_object() || !j.contains("planted") || !j["planted"].is_array()) {
        throw ConfigError("plant file must be an object with a \"planted\" array");
    }
    PlantSpec plant;
    for (const auto& e : j["planted"]) {
        if (!e.is_object() || !e.contains("neuron") || !e.contains("concept") ||
            !e.contains("kind")) {
            throw ConfigError(
                "each planted entry needs \"neuron\", \"concept\", and \"kind\" fields");
        }
        PlantedNeuron p;
        p.neuron = neuron_from_string(e["neuron"].get<std::string>());
        p.concept_id = concepts.id_of(e["concept"].get<std::string>());
        p.kind = detector_kind_from_name(e["kind"].get<std::string>());
        plant.planted.push_back(p);
    }
    if (j.contains("decoy_channels")) plant.decoy_channels = j["decoy_channels"].get<std::int64_t>();
    if (j.contains("weight_noise")) plant.weight_noise = j["weight_noise"].get<double>();
    return plant;
}

inline void save_plant_spec(const PlantSpec& plant, const ConceptSet& concepts,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write plant file: " + path);
    out << plant_spec_to_json(plant, concepts).dump(2) << "\n";
}

// Plant files are user-authored configuration, so every failure mode is a
// ConfigError rather than an artifact-integrity error.
inline PlantSpec load_plant_spec(const std::string& path, const ConceptSet& concepts) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open plant file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("plant file is not valid JSON: " + std::string(e.what()));
    }
    return plant_spec_from_json(j, concepts);
}

namespace planted_detail {

// Feature space shared by every detector: three colors, four oriented edge
// energies, and the border indicator.  Conv1 detectors see raw pixels, so
// only the color features exist there.
constexpr int kR = 0, kG = 1, kB = 2, kVE = 3, kHE = 4, kD1E = 5, kD2E = 6, kBorder = 7;
constexpr int kFeatures = 8;

// Fraction of the margin kept as headroom below the decision boundary: a
// detector's own concept responds at (1-kappa)*margin, the nearest rival at
// -kappa*margin, so the rival is strictly negative and relu silences it.
constexpr double kKappa = 0.25;

// Detector synthesis draws from this fixed stream so planted filters and
// carriers never vary with the build seed; only decoy jitter does.
constexpr std::uint64_t kDetectorSeed = 0x6d617267696eULL;

using FeatureVec = std::array<double, kFeatures>;

struct MarginBand {
    double lo = 0.0, hi = 0.0;
};

// Margin policy.  Shallow detectors get wide margins so realistic pixel
// budgets can never flip them; detectors at the deepest conv get graduated
// narrow margins so a sweep over perturbation budgets flips them one by one.
// The graded bands are placed to keep a clear gap from the decision
// boundaries of the standard budget ladder (2, 4, 6)/255: a targeted push
// needs roughly half the margin in pixel budget and an untargeted one about
// three quarters, so the bands avoid straddling those multiples.
inline MarginBand planted_margin_band(int depth, std::size_t ordinal) {
    if (depth == 0) return {0.080, 0.100};
    if (depth == 1) return {0.052, 0.072};
    static constexpr MarginBand graded[4] = {
        {0.021, 0.025}, {0.025, 0.029}, {0.033, 0.036}, {0.038, 0.042}};
    return graded[ordinal % 4];
}

inline double planted_response_anchor(int depth) { return depth == 2 ? 0.3 : 1.0; }

// Evidence channels carry the classifier, so they get a hard margin floor
// (comfortably above the largest standard perturbation budget) but no
// ceiling: any extra separation only makes the label more robust.
constexpr MarginBand kEvidenceBand{0.045, std::numeric_limits<double>::infinity()};
// Two-tone patterned regions carry edge energy in their interiors, and every
// solid patch exhibits the same energies along its boundary, so the weakest
// alignment class of a pattern sits structurally close to some patch-boundary
// profile no matter how the filter is weighted.  Patterned concepts therefore
// accept a narrower rival buffer: the classifier only needs every appearance
// of the concept to respond positively, and rival responses are clamped to
// zero ahead of the classification head.
constexpr MarginBand kPatternedEvidenceBand{0.012, std::numeric_limits<double>::infinity()};
constexpr double kPatternedInteriorEnergy = 0.05;
constexpr double kEvidenceAnchor = 2.0;

inline std::array<bool, kFeatures> allowed_features(DetectorKind kind, int depth) {
    std::array<bool, kFeatures> a{};
    a[kR] = a[kG] = a[kB] = true;
    if (depth == 0) return a;  // raw pixels: center color taps only
    a[kBorder] = true;
    if (kind == DetectorKind::OrientedEdge || kind == DetectorKind::TextureFrequency) {
        a[kVE] = a[kHE] = true;
    }
    if (kind == DetectorKind::TextureFrequency) a[kD1E] = a[kD2E] = true;
    return a;
}

struct SourceSigs {
    std::vector<FeatureVec> anchors;    // distinct signatures of cells wholly inside regions
    std::vector<FeatureVec> caps;       // signatures of cells the concept covers or touches
    std::vector<FeatureVec> cells;      // every distinct cell signature across the renders
    std::vector<FeatureVec> tieDeltas;  // anchor-profile differences that must respond equally
};

struct DepthSigs {
    std::map<std::int32_t, SourceSigs> byConcept;
    std::vector<SourceSigs> backgrounds;
};

struct Rivalry {
    std::vector<FeatureVec> anchors;  // occurring in-region profiles; the best one is the anchor
    std::vector<FeatureVec> rivals;   // must sit a full margin below the anchor response
    std::vector<FeatureVec> caps;     // own-appearance variants: must not exceed it
    std::vector<FeatureVec> basis;    // orthonormal rows the filter must be orthogonal to
    std::array<bool, kFeatures> allowed{};
    // Evidence filters must fire on every appearance of their concept, so
    // their response scale is pinned to the weakest in-region profile; mask
    // detectors only need the strongest profile to stand clear of rivals.
    bool anchorAtWeakest = false;
};

// Orthonormal basis (Gram-Schmidt) of the linear constraints on the filter:
// one row per disallowed feature, one for uniform color shifts (so gray
// changes cancel exactly), and one per appearance tie.  Tie rows come from
// in-region profiles that sit side by side inside a single image: if the
// filter ranked one above the other, the activation quantile could land on a
// lattice of isolated cells whose mask evaporates under bilinear upsampling,
// so such neighbours are constrained to respond identically.
inline std::vector<FeatureVec> constraint_basis(const std::array<bool, kFeatures>& allowed,
                                                const std::vector<FeatureVec>& tieDeltas) {
    std::vector<FeatureVec> rows;
    for (int f = 0; f < kFeatures; ++f) {
        if (!allowed[f]) {
            FeatureVec e{};
            e[f] = 1.0;
            rows.push_back(e);
        }
    }
    FeatureVec color{};
    color[kR] = color[kG] = color[kB] = 1.0;
    rows.push_back(color);
    rows.insert(rows.end(), tieDeltas.begin(), tieDeltas.end());
    std::vector<FeatureVec> basis;
    for (FeatureVec v : rows) {
        for (const auto& u : basis) {
            double dot = 0.0;
            for (int f = 0; f < kFeatures; ++f) dot += v[f] * u[f];
            for (int f = 0; f < kFeatures; ++f) v[f] -= dot * u[f];
        }
        double n2 = 0.0;
        for (double x : v) n2 += x * x;
        if (n2 < 1e-18) continue;  // already implied by earlier rows
        const double inv = 1.0 / std::sqrt(n2);
        for (double& x : v) x *= inv;
        basis.push_back(v);
    }
    return basis;
}

// Projects onto the detector weight space: orthogonal to every constraint
// row, border-indicator weight non-positive (the ring only ever marks image
// edges, so it may suppress rivals there but must never add response on top
// of a concept that happens to touch the border), unit L1 norm so a margin
// reads directly as an input-budget requirement.  The clamp can step off the
// constraint subspace when the border weight takes part in a tie, so the two
// are interleaved and the result verified; candidates the interleaving
// cannot reconcile are rejected.
inline bool project_unit(FeatureVec& w, const Rivalry& r) {
    for (int pass = 0; pass < 4; ++pass) {
        for (const auto& u : r.basis) {
            double dot = 0.0;
            for (int f = 0; f < kFeatures; ++f) dot += w[f] * u[f];
            for (int f = 0; f < kFeatures; ++f) w[f] -= dot * u[f];
        }
        w[kBorder] = std::min(w[kBorder], 0.0);
    }
    for (const auto& u : r.basis) {
        double dot = 0.0;
        for (int f = 0; f < kFeatures; ++f) dot += w[f] * u[f];
        if (std::abs(dot) > 1e-9) return false;
    }
    double l1 = 0.0;
    for (double v : w) l1 += std::abs(v);
    if (l1 < 1e-9) return false;
    for (double& v : w) v /= l1;
    return true;
}

// The anchor is the wholly-in-region profile the filter pins its response
// scale to: the strongest one for mask detectors, the weakest for evidence
// filters.  Every anchor profile recurs bit for bit across dataset images
// (its cells never see the background), so the top of the activation
// distribution is a wide tie block of such cells rather than a jittery tail.
inline double anchor_response(const FeatureVec& w, const Rivalry& r) {
    double best = r.anchorAtWeakest ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity();
    for (const auto& a : r.anchors) {
        double d = 0.0;
        for (int f = 0; f < kFeatures; ++f) d += w[f] * a[f];
        best = r.anchorAtWeakest ? std::min(best, d) : std::max(best, d);
    }
    return best;
}

inline const FeatureVec& anchor_profile(const FeatureVec& w, const Rivalry& r) {
    const FeatureVec* best = nullptr;
    double bestResp = 0.0;
    for (const auto& a : r.anchors) {
        double d = 0.0;
        for (int f = 0; f < kFeatures; ++f) d += w[f] * a[f];
        if (best == nullptr || (r.anchorAtWeakest ? d < bestResp : d > bestResp)) {
            bestResp = d;
            best = &a;
        }
    }
    if (best == nullptr) throw ConfigError("detector design needs at least one anchor profile");
    return *best;
}

inline double worst_separation(const FeatureVec& w, const Rivalry& r) {
    const double own = anchor_response(w, r);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& rv : r.rivals) {
        double d = own;
        for (int f = 0; f < kFeatures; ++f) d -= w[f] * rv[f];
        worst = std::min(worst, d);
    }
    return worst;
}

// Slack under the strongest anchor of the concept's least favorable
// own-appearance variant (pattern phase, region boundary, off-grid pooling
// alignment).  A variant that out-responds the anchor profile would claim
// the activation quantile for a sliver of cells and starve the detector's
// mask, so designs are only acceptable when this is non-negative; exact ties
// are fine -- a tying cell is still the concept's own, and it simply joins
// the mask.
constexpr double kCapTol = 1e-9;

inline double worst_cap_headroom(const FeatureVec& w, const Rivalry& r) {
    double own = -std::numeric_limits<double>::infinity();
    for (const auto& a : r.anchors) {
        double d = 0.0;
        for (int f = 0; f < kFeatures; ++f) d += w[f] * a[f];
        own = std::max(own, d);
    }
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& cap : r.caps) {
        double d = own;
        for (int f = 0; f < kFeatures; ++f) d -= w[f] * cap[f];
        worst = std::min(worst, d);
    }
    return worst;
}

// Cap-violating designs rank strictly below every compliant one, ordered by
// how close they are to compliance so the search can walk toward it.
inline double detector_score(const FeatureVec& w, const Rivalry& r) {
    const double cap = worst_cap_headroom(w, r);
    if (cap < -kCapTol) return cap - 1000.0;
    return worst_separation(w, r);
}

struct UnitDetector {
    FeatureVec w{};
    double margin = 0.0;
};

// Random-direction search plus coordinate polish for the max-margin unit
// filter.  The feasible space is tiny (at most seven free dimensions after
// the zero-sum projection), so this finds the optimum's neighborhood
// reliably and deterministically.
inline UnitDetector search_unit_detector(const Rivalry& r, Rng rng, const std::string& what,
                                         double requiredLo) {
    FeatureVec best{};
    double bestScore = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < 4096; ++it) {
        FeatureVec w{};
        for (int f = 0; f < kFeatures; ++f) {
            if (r.allowed[f]) w[f] = rng.next_gaussian();
        }
        if (!project_unit(w, r)) continue;
        const double s = detector_score(w, r);
        if (s > bestScore) {
            bestScore = s;
            best = w;
        }
    }
    static constexpr double kSteps[] = {0.5, 0.2, 0.08, 0.03, 0.01};
    for (int pass = 0; pass < 12; ++pass) {
        bool improved = false;
        for (int f = 0; f < kFeatures; ++f) {
            if (!r.allowed[f]) continue;
            for (double step : kSteps) {
                for (double sign : {1.0, -1.0}) {
                    FeatureVec w = best;
                    w[f] += sign * step;
                    if (!project_unit(w, r)) continue;
                    const double s = detector_score(w, r);
                    if (s > bestScore + 1e-12) {
                        bestScore = s;
                        best = w;
                        improved = true;
                    }
                }
            }
        }
        if (!improved) break;
    }
    if (worst_cap_headroom(best, r) < -kCapTol) {
        throw ConfigError("cannot build a detector for " + what +
                          ": every candidate weighting lets one of the concept's own "
                          "appearance variants out-respond its anchor profile");
    }
    if (bestScore < requiredLo) {
        throw ConfigError("cannot build a detector for " + what + ": best separating margin " +
                          std::to_string(bestScore) + " is below the required " +
                          std::to_string(requiredLo));
    }
    return {best, bestScore};
}

// Blends the max-margin filter toward its nearest rival until the margin
// lands inside the band.  The margin is continuous along the blend and
// negative at the rival itself, so bisection always finds the band; blends
// that let an own-appearance variant above the anchor are rejected outright.
inline UnitDetector settle_into_band(const Rivalry& r, UnitDetector d, MarginBand band,
                                     const std::string& what) {
    if (d.margin <= band.hi) return d;
    const FeatureVec own = anchor_profile(d.w, r);
    std::size_t runner = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r.rivals.size(); ++i) {
        double sep = 0.0;
        for (int f = 0; f < kFeatures; ++f) sep += d.w[f] * (own[f] - r.rivals[i][f]);
        if (sep < worst) {
            worst = sep;
            runner = i;
        }
    }
    FeatureVec v{};
    for (int f = 0; f < kFeatures; ++f) v[f] = r.rivals[runner][f] - own[f];
    if (!project_unit(v, r)) {
        throw ConfigError("margin settling failed for " + what);
    }
    auto blend = [&](double t) -> UnitDetector {
        FeatureVec w = d.w;
        for (int f = 0; f < kFeatures; ++f) w[f] += t * v[f];
        if (!project_unit(w, r) || worst_cap_headroom(w, r) < -kCapTol) {
            return {w, -std::numeric_limits<double>::infinity()};
        }
        return {w, worst_separation(w, r)};
    };
    double lo = 0.0, hi = 1.0;
    UnitDetector cand = blend(hi);
    for (int guard = 0; cand.margin > band.lo && guard < 60; ++guard) {
        if (cand.margin <= band.hi) return cand;
        lo = hi;
        hi *= 2.0;
        cand = blend(hi);
    }
    if (cand.margin >= band.lo && cand.margin <= band.hi) return cand;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        cand = blend(mid);
        if (cand.margin >= band.lo && cand.margin <= band.hi) return cand;
        if (cand.margin > band.hi) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    throw ConfigError("margin settling failed for " + what);
}

struct ScaledDetector {
    FeatureVec w{};
    double bias = 0.0;
};

// Bias puts the nearest rival at -kappa*margin and the own concept at
// (1-kappa)*margin; the scale then pins the anchor-profile response to the
// anchor value.
inline ScaledDetector finalize_detector(const Rivalry& r, const UnitDetector& d, double anchor) {
    const double own = anchor_response(d.w, r);
    const double runnerResponse = own - d.margin;
    const double biasUnit = -(runnerResponse + kKappa * d.margin);
    const double scale = anchor / ((1.0 - kKappa) * d.margin);
    ScaledDetector out;
    for (int f = 0; f < kFeatures; ++f) out.w[f] = d.w[f] * scale;
    out.bias = biasUnit * scale;
    return out;
}

inline ScaledDetector design_detector(const DepthSigs& sigs, std::int32_t conceptId,
                                      DetectorKind kind, int depth, MarginBand band,
                                      double anchor, std::int64_t channel,
                                      const std::string& what) {
    Rivalry r;
    r.allowed = allowed_features(kind, depth);
    const SourceSigs& own = sigs.byConcept.at(conceptId);
    r.anchors = own.anchors;
    r.caps = own.caps;
    r.basis = constraint_basis(r.allowed, own.tieDeltas);
    std::set<FeatureVec> rivalCells;
    for (const auto& [id, s] : sigs.byConcept) {
        if (id == conceptId) continue;
        rivalCells.insert(s.cells.begin(), s.cells.end());
    }
    for (const auto& s : sigs.backgrounds) {
        rivalCells.insert(s.cells.begin(), s.cells.end());
    }
    r.rivals.assign(rivalCells.begin(), rivalCells.end());
    Rng rng = Rng::stream(kDetectorSeed, static_cast<std::uint64_t>(depth),
                          static_cast<std::uint64_t>(channel));
    UnitDetector unit = search_unit_detector(r, rng, what, band.lo);
    unit = settle_into_band(r, unit, band, what);
    return finalize_detector(r, unit, anchor);
}

// A concept is patterned when its in-region interior profiles themselves carry
// edge energy (stripes, checkers), as opposed to solid fills whose energy lives
// only on the boundary.
inline bool patterned_interior(const SourceSigs& own) {
    for (const auto& a : own.anchors) {
        if (a[kVE] + a[kHE] + a[kD1E] + a[kD2E] > kPatternedInteriorEnergy) return true;
    }
    return false;
}

// Evidence channels may read whichever feature family separates their concept
// most widely: they exist to be strong, not to exercise a reading style.
inline ScaledDetector design_evidence_detector(const DepthSigs& sigs, std::int32_t conceptId,
                                               int depth, double anchor,
                                               std::int64_t channel, const std::string& what) {
    Rivalry r;
    const SourceSigs& own = sigs.byConcept.at(conceptId);
    const MarginBand band = patterned_interior(own) ? kPatternedEvidenceBand : kEvidenceBand;
    r.anchors = own.anchors;
    r.caps = own.caps;
    // The classifier sums these responses, so the filter must fire on every
    // appearance of the concept: its scale is pinned to the weakest
    // in-region profile and margins are measured from there.
    r.anchorAtWeakest = true;
    std::set<FeatureVec> rivalCells;
    for (const auto& [id, s] : sigs.byConcept) {
        if (id == conceptId) continue;
        rivalCells.insert(s.cells.begin(), s.cells.end());
    }
    for (const auto& s : sigs.backgrounds) {
        rivalCells.insert(s.cells.begin(), s.cells.end());
    }
    r.rivals.assign(rivalCells.begin(), rivalCells.end());
    UnitDetector best;
    best.margin = -std::numeric_limits<double>::infinity();
    std::array<bool, kFeatures> bestAllowed{};
    std::vector<FeatureVec> bestBasis;
    for (DetectorKind kind : {DetectorKind::ColorMatchedFilter, DetectorKind::OrientedEdge,
                              DetectorKind::TextureFrequency}) {
        r.allowed = allowed_features(kind, depth);
        r.basis = constraint_basis(r.allowed, own.tieDeltas);
        Rng rng = Rng::stream(kDetectorSeed, static_cast<std::uint64_t>(depth),
                              static_cast<std::uint64_t>(channel));
        try {
            const UnitDetector d =
                search_unit_detector(r, rng, what, -std::numeric_limits<double>::infinity());
            if (d.margin > best.margin) {
                best = d;
                bestAllowed = r.allowed;
                bestBasis = r.basis;
            }
        } catch (const ConfigError&) {
            // This template family cannot keep every appearance variant of the
            // concept at or below its anchor response; try the next family.
        }
    }
    if (best.margin < band.lo) {
        throw ConfigError("cannot build a detector for " + what + ": best separating margin " +
                          std::to_string(best.margin) + " is below the required " +
                          std::to_string(band.lo));
    }
    r.allowed = bestAllowed;
    r.basis = std::move(bestBasis);
    best = settle_into_band(r, best, band, what);
    return finalize_detector(r, best, anchor);
}

// --------------------------------------------------------------------------
// Carrier channels.
// --------------------------------------------------------------------------

struct Conv1Roles {
    std::int64_t r = -1, g = -1, b = -1;
    std::int64_t vp = -1, vn = -1, hp = -1, hn = -1;
    std::int64_t d1p = -1, d1n = -1, d2p = -1, d2n = -1;
    std::int64_t ring = -1;
    bool present() const { return r >= 0; }
    static constexpr std::int64_t kCount = 12;
};

struct Conv2Roles {
    std::int64_t r = -1, g = -1, b = -1;
    std::int64_t ve = -1, he = -1, d1e = -1, d2e = -1;
    std::int64_t border = -1;
    bool present() const { return r >= 0; }
    static constexpr std::int64_t kCount = 8;
};

// A luminance tap: the same coefficient spread over all three colors.
inline void add_lum_tap(TensorF32& w, std::int64_t oc, std::int64_t ky, std::int64_t kx,
                        double coef) {
    for (std::int64_t c = 0; c < 3; ++c) {
        w.at4(oc, c, ky, kx) += static_cast<float>(coef / 3.0);
    }
}

inline void fill_conv1_carriers(TensorF32& w, TensorF32& b, const Conv1Roles& r) {
    w.at4(r.r, 0, 1, 1) = 1.0f;
    w.at4(r.g, 1, 1, 1) = 1.0f;
    w.at4(r.b, 2, 1, 1) = 1.0f;
    // Oriented luminance gradients, one relu-survivable sign per channel;
    // the next layer sums the pair back into an unsigned edge energy.
    add_lum_tap(w, r.vp, 1, 2, 0.5);
    add_lum_tap(w, r.vp, 1, 0, -0.5);
    add_lum_tap(w, r.vn, 1, 2, -0.5);
    add_lum_tap(w, r.vn, 1, 0, 0.5);
    add_lum_tap(w, r.hp, 2, 1, 0.5);
    add_lum_tap(w, r.hp, 0, 1, -0.5);
    add_lum_tap(w, r.hn, 2, 1, -0.5);
    add_lum_tap(w, r.hn, 0, 1, 0.5);
    add_lum_tap(w, r.d1p, 2, 2, 0.5);
    add_lum_tap(w, r.d1p, 0, 0, -0.5);
    add_lum_tap(w, r.d1n, 2, 2, -0.5);
    add_lum_tap(w, r.d1n, 0, 0, 0.5);
    add_lum_tap(w, r.d2p, 2, 0, 0.5);
    add_lum_tap(w, r.d2p, 0, 2, -0.5);
    add_lum_tap(w, r.d2n, 2, 0, -0.5);
    add_lum_tap(w, r.d2n, 0, 2, 0.5);
    // Border ring: center minus ring luminance with a darkness tilt.  In the
    // image interior this sits at 0.3 - 0.6*lum (zero on mid-gray); where the
    // window hangs off the image edge the empty padding taps push it well
    // above any interior value, so the channel flags borders and corners.
    add_lum_tap(w, r.ring, 1, 1, 0.4);
    for (std::int64_t ky = 0; ky < 3; ++ky) {
        for (std::int64_t kx = 0; kx < 3; ++kx) {
            if (ky == 1 && kx == 1) continue;
            add_lum_tap(w, r.ring, ky, kx, -0.125);
        }
    }
    b[r.ring] = 0.3f;
}

inline void fill_conv2_carriers(TensorF32& w, const Conv1Roles& c1, const Conv2Roles& c2) {
    w.at4(c2.r, c1.r, 1, 1) = 1.0f;
    w.at4(c2.g, c1.g, 1, 1) = 1.0f;
    w.at4(c2.b, c1.b, 1, 1) = 1.0f;
    w.at4(c2.ve, c1.vp, 1, 1) = 1.0f;
    w.at4(c2.ve, c1.vn, 1, 1) = 1.0f;
    w.at4(c2.he, c1.hp, 1, 1) = 1.0f;
    w.at4(c2.he, c1.hn, 1, 1) = 1.0f;
    w.at4(c2.d1e, c1.d1p, 1, 1) = 1.0f;
    w.at4(c2.d1e, c1.d1n, 1, 1) = 1.0f;
    w.at4(c2.d2e, c1.d2p, 1, 1) = 1.0f;
    w.at4(c2.d2e, c1.d2n, 1, 1) = 1.0f;
    w.at4(c2.border, c1.ring, 1, 1) = 1.0f;
}

// --------------------------------------------------------------------------
// Signature measurement: each concept is rendered embedded in a flat canvas
// at every region footprint the generator can draw, slid across every
// pooling-grid alignment, over three background grays, and the activation
// cells of each render are classified by how their receptive cone meets the
// painted region:
//   anchors -- the cone (clipped to the image; conv padding is a fixed
//              input, not background) lies wholly inside the region.  These
//              features never depend on the background, so dataset cells
//              repeat them bit for bit; the detector pins its response scale
//              to the strongest of them.
//   caps    -- the cell's core block sits in the region, or its cone touches
//              it.  These mix region with background and must never
//              out-respond the anchor.
//   cells   -- every distinct signature seen anywhere; they feed the rival
//              sets of the other concepts' detectors, so margins hold cell
//              for cell against responses that actually occur rather than
//              invented feature combinations.
// --------------------------------------------------------------------------

inline FeatureVec cell_features(const TensorF32& act, int depth, const Conv1Roles& c1,
                                const Conv2Roles& c2, std::int64_t y, std::int64_t x) {
    FeatureVec f{};
    if (depth == 0) {
        f[kR] = act.at4(0, 0, y, x);
        f[kG] = act.at4(0, 1, y, x);
        f[kB] = act.at4(0, 2, y, x);
    } else if (depth == 1) {
        f[kR] = act.at4(0, c1.r, y, x);
        f[kG] = act.at4(0, c1.g, y, x);
        f[kB] = act.at4(0, c1.b, y, x);
        f[kVE] = act.at4(0, c1.vp, y, x) + act.at4(0, c1.vn, y, x);
        f[kHE] = act.at4(0, c1.hp, y, x) + act.at4(0, c1.hn, y, x);
        f[kD1E] = act.at4(0, c1.d1p, y, x) + act.at4(0, c1.d1n, y, x);
        f[kD2E] = act.at4(0, c1.d2p, y, x) + act.at4(0, c1.d2n, y, x);
        f[kBorder] = act.at4(0, c1.ring, y, x);
    } else {
        f[kR] = act.at4(0, c2.r, y, x);
        f[kG] = act.at4(0, c2.g, y, x);
        f[kB] = act.at4(0, c2.b, y, x);
        f[kVE] = act.at4(0, c2.ve, y, x);
        f[kHE] = act.at4(0, c2.he, y, x);
        f[kD1E] = act.at4(0, c2.d1e, y, x);
        f[kD2E] = act.at4(0, c2.d2e, y, x);
        f[kBorder] = act.at4(0, c2.border, y, x);
    }
    return f;
}

// Pixel geometry of one activation cell through the designed channels.  The
// cell owns a scale x scale block of image pixels; color features ride pure
// center-tap chains (no halo), while the edge-energy and border-ring
// features read one ring of neighbours at the bottom conv, so everything a
// cell reports is determined by its block plus a one-pixel halo.
struct CellFootprint {
    std::int64_t scale, reach;
};

inline CellFootprint cell_footprint(int depth) {
    if (depth == 0) return {1, 0};
    return {depth == 1 ? std::int64_t{2} : std::int64_t{4}, 1};
}

enum class CellZone { Anchor, Own, Near, Far };

inline CellZone classify_cell(const std::vector<std::uint8_t>& mask, std::int64_t S,
                              CellFootprint fp, std::int64_t cy, std::int64_t cx) {
    const std::int64_t y0 = cy * fp.scale, x0 = cx * fp.scale;
    bool coneInside = true, coreInside = true, touches = false;
    for (std::int64_t y = y0 - fp.reach; y < y0 + fp.scale + fp.reach; ++y) {
        for (std::int64_t x = x0 - fp.reach; x < x0 + fp.scale + fp.reach; ++x) {
            if (y < 0 || y >= S || x < 0 || x >= S) continue;  // conv padding, not background
            if (mask[static_cast<std::size_t>(y * S + x)] != 0) {
                touches = true;
            } else {
                coneInside = false;
                if (y >= y0 && y < y0 + fp.scale && x >= x0 && x < x0 + fp.scale) {
                    coreInside = false;
                }
            }
        }
    }
    if (coneInside) return CellZone::Anchor;
    if (coreInside) return CellZone::Own;
    if (touches) return CellZone::Near;
    return CellZone::Far;
}

inline TensorF32 run_prefix(const std::vector<LayerOp>& prefix, const TensorF32& img,
                            std::int64_t size) {
    TensorF32 x({1, 3, size, size});
    std::copy(img.data(), img.data() + img.size(), x.data());
    for (const auto& op : prefix) x = layer_forward(op, x);
    return x;
}

inline SourceSigs measure_concept_sigs(const std::string& name,
                                       const std::vector<LayerOp>& prefix, int depth,
                                       const Conv1Roles& c1, const Conv2Roles& c2,
                                       std::int64_t size) {
    const CellFootprint fp = cell_footprint(depth);
    std::set<FeatureVec> anchors, caps, ownZone, cells, ties;
    // Two distinct in-region profiles that occur side by side inside one
    // image must respond equally (see constraint_basis); record their
    // difference, sign-normalized so mirrored pairs collapse to one row.
    const auto addTie = [&ties](const FeatureVec& a, const FeatureVec& b) {
        FeatureVec d{};
        int lead = -1;
        for (int f = 0; f < kFeatures; ++f) {
            d[f] = a[f] - b[f];
            if (lead < 0 && std::abs(d[f]) > 1e-12) lead = f;
        }
        if (lead < 0) return;
        if (d[lead] < 0.0) {
            for (double& v : d) v = -v;
        }
        ties.insert(d);
    };
    // At depth 0 there is no pooling grid to align with; deeper sweeps slide
    // the region across all four grid phases per axis plus the border-flush
    // positions (see probe_offsets).
    const std::int64_t phases = depth == 0 ? 1 : 4;
    for (const RegionGeometry& g : region_geometries(name, size)) {
        const std::vector<std::int64_t> ys =
            g.topAnchored ? std::vector<std::int64_t>{0} : probe_offsets(size, g.h, phases);
        const std::vector<std::int64_t> xs =
            g.topAnchored ? std::vector<std::int64_t>{0} : probe_offsets(size, g.w, phases);
        for (float bg : {0.45f, 0.50f, 0.55f}) {
            for (const std::int64_t y0 : ys) {
                for (const std::int64_t x0 : xs) {
                    const ProbeRender pr = paint_probe_render(name, size, bg, g, x0, y0);
                    const TensorF32 act = run_prefix(prefix, pr.img, size);
                    const std::int64_t h = act.dim(2), w = act.dim(3);
                    std::vector<char> isAnchor(static_cast<std::size_t>(h * w), 0);
                    std::vector<FeatureVec> grid(static_cast<std::size_t>(h * w));
                    for (std::int64_t y = 0; y < h; ++y) {
                        for (std::int64_t x = 0; x < w; ++x) {
                            const FeatureVec f = cell_features(act, depth, c1, c2, y, x);
                            grid[static_cast<std::size_t>(y * w + x)] = f;
                            cells.insert(f);
                            switch (classify_cell(pr.mask, size, fp, y, x)) {
                                case CellZone::Anchor:
                                    anchors.insert(f);
                                    isAnchor[static_cast<std::size_t>(y * w + x)] = 1;
                                    break;
                                case CellZone::Own:
                                    ownZone.insert(f);
                                    caps.insert(f);
                                    break;
                                case CellZone::Near:
                                    caps.insert(f);
                                    break;
                                case CellZone::Far:
                                    break;
                            }
                        }
                    }
                    for (std::int64_t y = 0; y < h; ++y) {
                        for (std::int64_t x = 0; x < w; ++x) {
                            if (!isAnchor[static_cast<std::size_t>(y * w + x)]) continue;
                            const FeatureVec& f = grid[static_cast<std::size_t>(y * w + x)];
                            if (x + 1 < w && isAnchor[static_cast<std::size_t>(y * w + x + 1)]) {
                                addTie(f, grid[static_cast<std::size_t>(y * w + x + 1)]);
                            }
                            if (y + 1 < h && isAnchor[static_cast<std::size_t>((y + 1) * w + x)]) {
                                addTie(f, grid[static_cast<std::size_t>((y + 1) * w + x)]);
                            }
                        }
                    }
                }
            }
        }
    }
    if (anchors.empty()) {
        // A concept too small to bury a whole receptive cone anchors on the
        // cells whose core block it covers instead.
        anchors = ownZone;
    }
    if (anchors.empty()) {
        throw ConfigError("concept " + name +
                          " never fully covers an activation cell; its signature "
                          "cannot anchor a detector");
    }
    SourceSigs s;
    s.anchors.assign(anchors.begin(), anchors.end());
    s.caps.assign(caps.begin(), caps.end());
    s.cells.assign(cells.begin(), cells.end());
    s.tieDeltas.assign(ties.begin(), ties.end());
    return s;
}

inline DepthSigs measure_depth_sigs(const ConceptSet& concepts,
                                    const std::vector<LayerOp>& prefix, int depth,
                                    const Conv1Roles& c1, const Conv2Roles& c2,
                                    std::int64_t size) {
    DepthSigs out;
    for (const auto& c : concepts.concepts) {
        out.byConcept[c.id] = measure_concept_sigs(c.name, prefix, depth, c1, c2, size);
    }
    for (float bg : {0.45f, 0.50f, 0.55f}) {
        const TensorF32 flat({3, size, size}, bg);
        const TensorF32 act = run_prefix(prefix, flat, size);
        const std::int64_t h = act.dim(2), w = act.dim(3);
        std::set<FeatureVec> distinct;
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t x = 0; x < w; ++x) {
                distinct.insert(cell_features(act, depth, c1, c2, y, x));
            }
        }
        SourceSigs s;
        s.cells.assign(distinct.begin(), distinct.end());
        out.backgrounds.push_back(std::move(s));
    }
    return out;
}

// --------------------------------------------------------------------------
// Detector and decoy kernels.
// --------------------------------------------------------------------------

inline void apply_detector_depth0(TensorF32& w, TensorF32& b, std::int64_t ch,
                                  const ScaledDetector& d) {
    w.at4(ch, 0, 1, 1) = static_cast<float>(d.w[kR]);
    w.at4(ch, 1, 1, 1) = static_cast<float>(d.w[kG]);
    w.at4(ch, 2, 1, 1) = static_cast<float>(d.w[kB]);
    b[ch] = static_cast<float>(d.bias);
}

inline void apply_detector_depth1(TensorF32& w, TensorF32& b, std::int64_t ch,
                                  const ScaledDetector& d, const Conv1Roles& c1) {
    w.at4(ch, c1.r, 1, 1) = static_cast<float>(d.w[kR]);
    w.at4(ch, c1.g, 1, 1) = static_cast<float>(d.w[kG]);
    w.at4(ch, c1.b, 1, 1) = static_cast<float>(d.w[kB]);
    w.at4(ch, c1.vp, 1, 1) = static_cast<float>(d.w[kVE]);
    w.at4(ch, c1.vn, 1, 1) = static_cast<float>(d.w[kVE]);
    w.at4(ch, c1.hp, 1, 1) = static_cast<float>(d.w[kHE]);
    w.at4(ch, c1.hn, 1, 1) = static_cast<float>(d.w[kHE]);
    w.at4(ch, c1.d1p, 1, 1) = static_cast<float>(d.w[kD1E]);
    w.at4(ch, c1.d1n, 1, 1) = static_cast<float>(d.w[kD1E]);
    w.at4(ch, c1.d2p, 1, 1) = static_cast<float>(d.w[kD2E]);
    w.at4(ch, c1.d2n, 1, 1) = static_cast<float>(d.w[kD2E]);
    w.at4(ch, c1.ring, 1, 1) = static_cast<float>(d.w[kBorder]);
    b[ch] = static_cast<float>(d.bias);
}

inline void apply_detector_depth2(TensorF32& w, TensorF32& b, std::int64_t ch,
                                  const ScaledDetector& d, const Conv2Roles& c2) {
    w.at4(ch, c2.r, 1, 1) = static_cast<float>(d.w[kR]);
    w.at4(ch, c2.g, 1, 1) = static_cast<float>(d.w[kG]);
    w.at4(ch, c2.b, 1, 1) = static_cast<float>(d.w[kB]);
    w.at4(ch, c2.ve, 1, 1) = static_cast<float>(d.w[kVE]);
    w.at4(ch, c2.he, 1, 1) = static_cast<float>(d.w[kHE]);
    w.at4(ch, c2.d1e, 1, 1) = static_cast<float>(d.w[kD1E]);
    w.at4(ch, c2.d2e, 1, 1) = static_cast<float>(d.w[kD2E]);
    w.at4(ch, c2.border, 1, 1) = static_cast<float>(d.w[kBorder]);
    b[ch] = static_cast<float>(d.bias);
}

inline void jitter_kernel(TensorF32& w, std::int64_t ch, double scale, Rng& rng) {
    const auto& s = w.shape();
    for (std::int64_t ic = 0; ic < s[1]; ++ic) {
        for (std::int64_t ky = 0; ky < s[2]; ++ky) {
            for (std::int64_t kx = 0; kx < s[3]; ++kx) {
                w.at4(ch, ic, ky, kx) += static_cast<float>(scale * rng.next_gaussian());
            }
        }
    }
}

// South-facing luminance edge: center minus the cell directly below.  In the
// interior this is a vertical gradient (at most twice a texture amplitude);
// only on the bottom image row, where the south tap hangs into zero padding,
// does it return full luminance.  The tap stays at kx=1 so the left and right
// image columns -- which concept regions such as full-width bands do cross --
// respond exactly like interior cells.
inline void build_conv1_decoy(TensorF32& w, std::int64_t ch, double noise, Rng& rng) {
    add_lum_tap(w, ch, 1, 1, 1.0);
    add_lum_tap(w, ch, 2, 1, -1.0);
    jitter_kernel(w, ch, noise * 0.1, rng);
}

// Deeper decoys re-detect a shallower decoy (or, without one, whatever
// channel the ordinal points at), inheriting its border-hugging profile.
inline void build_passthrough_decoy(TensorF32& w, std::int64_t ch, std::int64_t src,
                                    double noise, Rng& rng) {
    w.at4(ch, src, 1, 1) = 1.0f;
    jitter_kernel(w, ch, noise * 0.05, rng);
}

struct LayerAlloc {
    std::int64_t channels = 0;
    std::vector<PlantedNeuron> planted;   // sorted by channel
    std::vector<std::int64_t> freeSlots;  // ascending, excluding planted channels
};

inline LayerAlloc allocate_layer(const std::string& layer, std::int64_t reserved,
                                 std::vector<PlantedNeuron> planted, std::int64_t decoys) {
    LayerAlloc a;
    std::sort(planted.begin(), planted.end(),
              [](const PlantedNeuron& x, const PlantedNeuron& y) {
                  return x.neuron.channel < y.neuron.channel;
              });
    a.planted = std::move(planted);
    a.channels = reserved + static_cast<std::int64_t>(a.planted.size()) + decoys;
    if (a.channels < 1) {
        throw ConfigError("layer " + layer +
                          " would have no channels; plant a detector or allow decoy channels");
    }
    for (const auto& p : a.planted) {
        if (p.neuron.channel >= a.channels) {
            throw ConfigError("layer " + layer + " has too few channels for this plant: channel " +
                              std::to_string(p.neuron.channel) + " requested but only " +
                              std::to_string(a.channels) + " exist");
        }
    }
    std::set<std::int64_t> taken;
    for (const auto& p : a.planted) taken.insert(p.neuron.channel);
    for (std::int64_t c = 0; c < a.channels; ++c) {
        if (!taken.count(c)) a.freeSlots.push_back(c);
    }
    return a;
}

}  // namespace planted_detail

// ---------------------------------------------------------------------------
// Model builder.
// ---------------------------------------------------------------------------

inline ModelSpec build_planted_model(const ConceptSet& concepts, const PlantSpec& plant,
                                     std::uint64_t seed, std::int64_t imageSize = 32) {
    using namespace planted_detail;
    concepts.validate();
    if (plant.decoy_channels < 0) {
        throw ConfigError("decoy channel count must be non-negative");
    }
    if (!(plant.weight_noise >= 0.0) || !std::isfinite(plant.weight_noise)) {
        throw ConfigError("weight noise must be finite and non-negative");
    }
    if (imageSize < 16 || imageSize % 8 != 0) {
        throw ConfigError("planted models need an image size of at least 16, divisible by 8");
    }

    static const std::array<std::string, 3> layerNames = {"conv1", "conv2", "conv3"};
    std::array<std::vector<PlantedNeuron>, 3> byLayer;
    std::set<std::pair<std::string, std::int64_t>> seen;
    for (const auto& p : plant.planted) {
        int depth = -1;
        for (int d = 0; d < 3; ++d) {
            if (p.neuron.layer == layerNames[static_cast<std::size_t>(d)]) depth = d;
        }
        if (depth < 0) {
            throw ConfigError("cannot plant at unknown layer '" + p.neuron.layer +
                              "'; detectors go in conv1, conv2, or conv3");
        }
        if (p.neuron.channel < 0) {
            throw ConfigError("planted channel must be non-negative: " + p.neuron.to_string());
        }
        painter_for(concepts.at(p.concept_id).name);  // plantable concepts need a painter
        if (!seen.insert({p.neuron.layer, p.neuron.channel}).second) {
            throw ConfigError("two detectors planted at the same neuron: " +
                              p.neuron.to_string());
        }
        if (depth == 0 && p.kind != DetectorKind::ColorMatchedFilter) {
            throw ConfigError("detector kind '" + detector_kind_name(p.kind) +
                              "' needs edge carriers that only exist from conv2 on; conv1 "
                              "plants must be color-matched-filter");
        }
        byLayer[static_cast<std::size_t>(depth)].push_back(p);
    }

    const bool carriers = !plant.planted.empty();

    // Every shallow-planted concept gets a strong evidence channel at conv3
    // for the classifier head; conv3 plants act as their own evidence.
    std::vector<std::int32_t> evidenceIds;
    {
        std::set<std::int32_t> shallow, deep;
        for (const auto& p : byLayer[0]) shallow.insert(p.concept_id);
        for (const auto& p : byLayer[1]) shallow.insert(p.concept_id);
        for (const auto& p : byLayer[2]) deep.insert(p.concept_id);
        for (std::int32_t id : shallow) {
            if (!deep.count(id)) evidenceIds.push_back(id);
        }
    }

    LayerAlloc a1 = allocate_layer("conv1", carriers ? Conv1Roles::kCount : 0, byLayer[0],
                                   plant.decoy_channels);
    LayerAlloc a2 = allocate_layer("conv2", carriers ? Conv2Roles::kCount : 0, byLayer[1],
                                   plant.decoy_channels);
    LayerAlloc a3 = allocate_layer("conv3", static_cast<std::int64_t>(evidenceIds.size()),
                                   byLayer[2], plant.decoy_channels);

    // ---- conv1: carriers, planted color detectors, decoys -----------------
    TensorF32 w1({a1.channels, 3, 3, 3}, 0.0f);
    TensorF32 b1({a1.channels}, 0.0f);
    Conv1Roles c1;
    std::size_t slot1 = 0;
    auto take1 = [&]() { return a1.freeSlots[slot1++]; };
    if (carriers) {
        c1.r = take1();
        c1.g = take1();
        c1.b = take1();
        c1.vp = take1();
        c1.vn = take1();
        c1.hp = take1();
        c1.hn = take1();
        c1.d1p = take1();
        c1.d1n = take1();
        c1.d2p = take1();
        c1.d2n = take1();
        c1.ring = take1();
        fill_conv1_carriers(w1, b1, c1);
    }
    if (!a1.planted.empty()) {
        const DepthSigs sigs0 = measure_depth_sigs(concepts, {}, 0, c1, Conv2Roles{}, imageSize);
        std::size_t ordinal = 0;
        for (const auto& p : a1.planted) {
            const std::string what =
                "'" + concepts.at(p.concept_id).name + "' at " + p.neuron.to_string();
            const ScaledDetector d =
                design_detector(sigs0, p.concept_id, p.kind, 0, planted_margin_band(0, ordinal),
                                planted_response_anchor(0), p.neuron.channel, what);
            apply_detector_depth0(w1, b1, p.neuron.channel, d);
            ++ordinal;
        }
    }
    std::vector<std::int64_t> decoys1(a1.freeSlots.begin() + static_cast<std::ptrdiff_t>(slot1),
                                      a1.freeSlots.end());
    for (std::size_t k = 0; k < decoys1.size(); ++k) {
        Rng rng = Rng::stream(seed, 0, static_cast<std::uint64_t>(decoys1[k]), 5);
        build_conv1_decoy(w1, decoys1[k], plant.weight_noise, rng);
    }

    LayerOp conv1{"conv1", LayerKind::Conv2d, std::move(w1), std::move(b1), 1, 1, 2, 2};
    LayerOp relu1{"relu1", LayerKind::Relu, {}, {}, 1, 0, 2, 2};
    LayerOp pool1{"pool1", LayerKind::MaxPool, {}, {}, 1, 0, 2, 2};

    // ---- conv2: carriers, planted detectors, decoys ------------------------
    TensorF32 w2({a2.channels, a1.channels, 3, 3}, 0.0f);
    TensorF32 b2({a2.channels}, 0.0f);
    Conv2Roles c2;
    std::size_t slot2 = 0;
    auto take2 = [&]() { return a2.freeSlots[slot2++]; };
    if (carriers) {
        c2.r = take2();
        c2.g = take2();
        c2.b = take2();
        c2.ve = take2();
        c2.he = take2();
        c2.d1e = take2();
        c2.d2e = take2();
        c2.border = take2();
        fill_conv2_carriers(w2, c1, c2);
    }
    if (!a2.planted.empty()) {
        const DepthSigs sigs1 =
            measure_depth_sigs(concepts, {conv1, relu1, pool1}, 1, c1, c2, imageSize);
        std::size_t ordinal = 0;
        for (const auto& p : a2.planted) {
            const std::string what =
                "'" + concepts.at(p.concept_id).name + "' at " + p.neuron.to_string();
            const ScaledDetector d =
                design_detector(sigs1, p.concept_id, p.kind, 1, planted_margin_band(1, ordinal),
                                planted_response_anchor(1), p.neuron.channel, what);
            apply_detector_depth1(w2, b2, p.neuron.channel, d, c1);
            ++ordinal;
        }
    }
    std::vector<std::int64_t> decoys2(a2.freeSlots.begin() + static_cast<std::ptrdiff_t>(slot2),
                                      a2.freeSlots.end());
    for (std::size_t k = 0; k < decoys2.size(); ++k) {
        Rng rng = Rng::stream(seed, 1, static_cast<std::uint64_t>(decoys2[k]), 5);
        const std::int64_t src = decoys1.empty()
                                     ? static_cast<std::int64_t>(k) % a1.channels
                                     : decoys1[k % decoys1.size()];
        build_passthrough_decoy(w2, decoys2[k], src, plant.weight_noise, rng);
    }

    LayerOp conv2{"conv2", LayerKind::Conv2d, std::move(w2), std::move(b2), 1, 1, 2, 2};
    LayerOp relu2{"relu2", LayerKind::Relu, {}, {}, 1, 0, 2, 2};
    LayerOp pool2{"pool2", LayerKind::MaxPool, {}, {}, 1, 0, 2, 2};

    // ---- conv3: evidence channels, planted detectors, decoys ---------------
    TensorF32 w3({a3.channels, a2.channels, 3, 3}, 0.0f);
    TensorF32 b3({a3.channels}, 0.0f);
    std::vector<std::int64_t> evidenceChannels;
    std::size_t slot3 = 0;
    if (!evidenceIds.empty() || !a3.planted.empty()) {
        const DepthSigs sigs2 = measure_depth_sigs(
            concepts, {conv1, relu1, pool1, conv2, relu2, pool2}, 2, c1, c2, imageSize);
        for (std::int32_t id : evidenceIds) {
            const std::int64_t ch = a3.freeSlots[slot3++];
            evidenceChannels.push_back(ch);
            const std::string what = "evidence for '" + concepts.at(id).name + "' at conv3:" +
                                     std::to_string(ch);
            const ScaledDetector d =
                design_evidence_detector(sigs2, id, 2, kEvidenceAnchor, ch, what);
            apply_detector_depth2(w3, b3, ch, d, c2);
        }
        std::size_t ordinal = 0;
        for (const auto& p : a3.planted) {
            const std::string what =
                "'" + concepts.at(p.concept_id).name + "' at " + p.neuron.to_string();
            const ScaledDetector d =
                design_detector(sigs2, p.concept_id, p.kind, 2, planted_margin_band(2, ordinal),
                                planted_response_anchor(2), p.neuron.channel, what);
            apply_detector_depth2(w3, b3, p.neuron.channel, d, c2);
            ++ordinal;
        }
    }
    std::vector<std::int64_t> decoys3(a3.freeSlots.begin() + static_cast<std::ptrdiff_t>(slot3),
                                      a3.freeSlots.end());
    for (std::size_t k = 0; k < decoys3.size(); ++k) {
        Rng rng = Rng::stream(seed, 2, static_cast<std::uint64_t>(decoys3[k]), 5);
        const std::int64_t src = decoys2.empty()
                                     ? static_cast<std::int64_t>(k) % a2.channels
                                     : decoys2[k % decoys2.size()];
        build_passthrough_decoy(w3, decoys3[k], src, plant.weight_noise, rng);
    }

    LayerOp conv3{"conv3", LayerKind::Conv2d, std::move(w3), std::move(b3), 1, 1, 2, 2};
    LayerOp relu3{"relu3", LayerKind::Relu, {}, {}, 1, 0, 2, 2};
    LayerOp pool3{"pool3", LayerKind::MaxPool, {}, {}, 1, 0, 2, 2};
    LayerOp flatten{"flatten", LayerKind::Flatten, {}, {}, 1, 0, 2, 2};

    // ---- classifier head: each class sums its concept's conv3 channel ------
    const std::int64_t numClasses = std::max<std::int64_t>(2, concepts.size());
    const std::int64_t grid = imageSize / 8;
    const std::int64_t cells = grid * grid;
    TensorF32 hw({numClasses, a3.channels * cells}, 0.0f);
    TensorF32 hb({numClasses}, 0.0f);
    std::map<std::int32_t, std::int64_t> classSource;
    for (std::size_t e = 0; e < evidenceIds.size(); ++e) {
        classSource[evidenceIds[e]] = evidenceChannels[e];
    }
    for (const auto& p : a3.planted) classSource.emplace(p.concept_id, p.neuron.channel);
    for (const auto& [id, src] : classSource) {
        for (std::int64_t cell = 0; cell < cells; ++cell) {
            hw.at2(id, src * cells + cell) = 1.0f;
        }
    }
    LayerOp head{"head", LayerKind::Linear, std::move(hw), std::move(hb), 1, 0, 2, 2};

    ModelSpec model;
    model.layers = {std::move(conv1), std::move(relu1), std::move(pool1),
                    std::move(conv2), std::move(relu2), std::move(pool2),
                    std::move(conv3), std::move(relu3), std::move(pool3),
                    std::move(flatten), std::move(head)};
    model.dissectable = {"conv1", "conv2", "conv3"};
    model.num_classes = numClasses;
    model.input_shape = {3, imageSize, imageSize};
    model.validate();
    return model;
}

}  // namespace nemc
