#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nemc/autodiff.hpp"
#include "nemc/bundle.hpp"
#include "nemc/dataset.hpp"
#include "nemc/errors.hpp"
#include "nemc/model.hpp"
#include "nemc/tensor.hpp"
#include "nemc/upsample.hpp"

namespace nemc {

// Explains channels of conv layers: per-channel activation thresholds over a
// probing dataset, thresholded upsampled activation masks, and a concept
// assignment by mask similarity.  The similarity is pluggable; the shipped
// instance is dataset-wide intersection-over-union.

inline constexpr double kDefaultEta = 0.005;
inline constexpr double kDefaultFloor = 0.04;

class SimilarityFunction {
  public:
    virtual ~SimilarityFunction() = default;
    // Scores how well per-image binary masks for one neuron (N x H x W) line
    // up with a concept's ground-truth masks across the whole dataset.
    virtual double evaluate(const TensorU8& neuron_masks, const ProbingDataset& ds,
                            std::int32_t concept_id) const = 0;
    virtual std::string identifier() const = 0;
};

// Top-eta quantile by nearest rank: the value at 0-based index floor(eta*S)
// of the descending sort.  With fewer than 1/eta samples the index
// degenerates to 0, i.e. the maximum.
inline float compute_threshold(std::vector<float> samples, double eta) {
    if (!(eta > 0.0 && eta < 1.0)) {
        throw ConfigError("quantile level must be inside (0,1), got " + std::to_string(eta));
    }
    if (samples.empty()) throw ConfigError("no activation samples to take a quantile of");
    for (const float s : samples) {
        if (!std::isfinite(s)) {
            throw IntegrityError("nonfinite_activation", "activation sample is not finite");
        }
    }
    const auto idx = static_cast<std::size_t>(eta * static_cast<double>(samples.size()));
    const auto nth = samples.begin() + static_cast<std::ptrdiff_t>(std::min(idx, samples.size() - 1));
    std::nth_element(samples.begin(), nth, samples.end(), std::greater<float>());
    return *nth;
}

// Bilinearly upsamples an activation plane to the target resolution and
// compares against the threshold; >= so a plane equal to its threshold turns
// fully on.
inline TensorU8 upsampled_threshold_mask(const TensorF32& plane, std::int64_t target_h,
                                         std::int64_t target_w, float threshold) {
    const TensorF32 up = bilinear_upsample(plane, target_h, target_w);
    TensorU8 mask({target_h, target_w});
    for (std::int64_t i = 0; i < up.size(); ++i) mask[i] = up[i] >= threshold ? 1 : 0;
    return mask;
}

inline TensorU8 compute_binary_mask(const ModelSpec& model, const TensorF32& image,
                                    const NeuronAddress& neuron, float threshold) {
    if (!model.is_dissectable(neuron.layer)) {
        throw ConfigError("layer is not dissectable: " + neuron.layer);
    }
    if (neuron.channel >= model.channel_count(neuron.layer)) {
        throw ConfigError("channel out of range for " + neuron.layer + ": " +
                          std::to_string(neuron.channel));
    }
    const ForwardResult fr = forward_collect(model, image, {neuron.layer});
    const TensorF32& act = fr.activations.at(neuron.layer);
    const std::int64_t h = act.dim(2), w = act.dim(3);
    TensorF32 plane({h, w});
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) plane.at2(y, x) = act.at4(0, neuron.channel, y, x);
    }
    return upsampled_threshold_mask(plane, image.dim(2), image.dim(3), threshold);
}

// Dataset-wide ratio of sums: sum_i |M_i and L_i| / sum_i |M_i or L_i|.
// Deliberately not the mean of per-image ratios; 0 when the union is empty.
inline double iou_similarity(const TensorU8& neuron_masks, const ProbingDataset& ds,
                             std::int32_t concept_id) {
    ds.concepts.at(concept_id);
    const std::int64_t n = ds.n(), hw = ds.height() * ds.width();
    if (neuron_masks.shape != std::vector<std::int64_t>{n, ds.height(), ds.width()}) {
        throw std::invalid_argument("neuron masks shape " + shape_to_string(neuron_masks.shape) +
                                    " does not match dataset images");
    }
    const std::int64_t k = ds.concepts.size();
    std::uint64_t inter = 0, uni = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::uint8_t* m = neuron_masks.data.data() + i * hw;
        const std::uint8_t* l = ds.masks.data.data() + (i * k + concept_id) * hw;
        for (std::int64_t p = 0; p < hw; ++p) {
            const bool mm = m[p] != 0, ll = l[p] != 0;
            inter += (mm && ll) ? 1 : 0;
            uni += (mm || ll) ? 1 : 0;
        }
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

class IouSimilarity final : public SimilarityFunction {
  public:
    double evaluate(const TensorU8& neuron_masks, const ProbingDataset& ds,
                    std::int32_t concept_id) const override {
        return iou_similarity(neuron_masks, ds, concept_id);
    }
    std::string identifier() const override { return "iou"; }
};

struct ConceptAssignment {
    std::optional<std::int32_t> concept_id;  // empty when the top score is below the floor
    double score = 0.0;                      // best similarity, kept even when below the floor
    std::optional<std::int32_t> runner_up;
    double runner_score = 0.0;
};

// Argmax of the similarity over the concept vocabulary; ties break toward the
// lowest concept id.  Below-floor winners are reported as "none".
inline ConceptAssignment assign_concept(const TensorU8& neuron_masks, const ProbingDataset& ds,
                                        const SimilarityFunction& sim, double floor) {
    if (ds.concepts.size() == 0) throw ConfigError("concept vocabulary is empty");
    ConceptAssignment a;
    std::int32_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    std::vector<double> scores(static_cast<std::size_t>(ds.concepts.size()));
    for (std::int32_t c = 0; c < ds.concepts.size(); ++c) {
        const double s = sim.evaluate(neuron_masks, ds, c);
        if (!std::isfinite(s)) {
            throw IntegrityError("nonfinite_score", "similarity returned a non-finite score");
        }
        scores[static_cast<std::size_t>(c)] = s;
        if (s > best_score) {
            best_score = s;
            best = c;
        }
    }
    a.score = best_score;
    if (best_score >= floor) a.concept_id = best;
    for (std::int32_t c = 0; c < ds.concepts.size(); ++c) {
        if (c == best) continue;
        const double s = scores[static_cast<std::size_t>(c)];
        if (!a.runner_up.has_value() || s > a.runner_score) {
            a.runner_up = c;
            a.runner_score = s;
        }
    }
    return a;
}

struct ThresholdEntry {
    NeuronAddress neuron;
    float threshold = 0.0f;
    double eta = kDefaultEta;
    std::int64_t samples = 0;  // N * H_l * W_l of the neuron's layer
};

struct ThresholdTable {
    std::vector<ThresholdEntry> entries;

    const ThresholdEntry& at(const NeuronAddress& n) const {
        for (const auto& e : entries) {
            if (e.neuron.layer == n.layer && e.neuron.channel == n.channel) return e;
        }
        throw ConfigError("no threshold recorded for " + n.to_string());
    }
};

struct BinaryMaskSet {
    // Per neuron: N x H x W input-resolution masks, in dissection order.
    std::vector<std::pair<NeuronAddress, TensorU8>> masks;

    bool has(const NeuronAddress& n) const {
        for (const auto& [addr, m] : masks) {
            if (addr.layer == n.layer && addr.channel == n.channel) return true;
        }
        return false;
    }
    const TensorU8& at(const NeuronAddress& n) const {
        for (const auto& [addr, m] : masks) {
            if (addr.layer == n.layer && addr.channel == n.channel) return m;
        }
        throw ConfigError("no masks recorded for " + n.to_string());
    }
};

struct NeuronReading {
    NeuronAddress neuron;
    std::optional<std::int32_t> concept_id;
    double score = 0.0;
    std::optional<std::int32_t> runner_up;
    double runner_score = 0.0;
    float threshold = 0.0f;
    bool interpretable = false;
};

struct DissectionResult {
    std::vector<NeuronReading> neurons;

    const NeuronReading& at(const NeuronAddress& n) const {
        for (const auto& r : neurons) {
            if (r.neuron.layer == n.layer && r.neuron.channel == n.channel) return r;
        }
        throw ConfigError("no dissection reading for " + n.to_string());
    }
};

struct Dissection {
    DissectionResult result;
    ThresholdTable thresholds;
    BinaryMaskSet masks;
    ConceptSet concepts;
    double eta = kDefaultEta;
    double floor = kDefaultFloor;
    std::string similarity = "iou";
};

struct DissectionOptions {
    double eta = kDefaultEta;
    double floor = kDefaultFloor;
    const SimilarityFunction* similarity = nullptr;  // null means IOU
};

// Runs the full explanation pipeline for every channel of the requested conv
// layers: thresholds from all activation scalars, per-image upsampled masks,
// and a concept assignment per channel.  Deterministic in its inputs.
inline Dissection dissect(const ModelSpec& model, const ProbingDataset& ds,
                          const std::vector<std::string>& layers,
                          const DissectionOptions& opt = {}) {
    model.validate();
    ds.validate();
    for (const auto& layer : layers) {
        model.layer_index(layer);
        if (!model.is_dissectable(layer)) {
            throw ConfigError("layer is not dissectable: " + layer);
        }
    }
    const IouSimilarity iou;
    const SimilarityFunction& sim = opt.similarity ? *opt.similarity : iou;

    Dissection d;
    d.concepts = ds.concepts;
    d.eta = opt.eta;
    d.floor = opt.floor;
    d.similarity = sim.identifier();

    const std::int64_t n = ds.n();
    const std::int64_t img_h = ds.height(), img_w = ds.width();
    constexpr std::int64_t kChunk = 64;

    // One forward sweep collecting every requested layer's activations.
    std::map<std::string, TensorF32> acts;
    {
        const auto shapes = model.output_shapes(n);
        for (const auto& layer : layers) {
            const auto idx = static_cast<std::size_t>(model.layer_index(layer));
            acts.emplace(layer, TensorF32(shapes[idx]));
        }
        for (std::int64_t lo = 0; lo < n; lo += kChunk) {
            const std::int64_t hi = std::min(n, lo + kChunk);
            TensorF32 batch({hi - lo, 3, img_h, img_w});
            std::copy(ds.images.data() + lo * 3 * img_h * img_w,
                      ds.images.data() + hi * 3 * img_h * img_w, batch.data());
            const ForwardResult fr = forward_collect(model, batch, layers);
            for (const auto& layer : layers) {
                const TensorF32& src = fr.activations.at(layer);
                TensorF32& dst = acts.at(layer);
                const std::int64_t per_image = src.size() / (hi - lo);
                std::copy(src.data(), src.data() + src.size(), dst.data() + lo * per_image);
            }
        }
    }

    for (const auto& layer : layers) {
        const TensorF32& a = acts.at(layer);
        const std::int64_t c_count = a.dim(1), h = a.dim(2), w = a.dim(3);
        for (std::int64_t c = 0; c < c_count; ++c) {
            const NeuronAddress neuron{layer, c};
            std::vector<float> samples(static_cast<std::size_t>(n * h * w));
            for (std::int64_t i = 0; i < n; ++i) {
                const float* src = a.data() + ((i * c_count + c) * h * w);
                std::copy(src, src + h * w, samples.data() + i * h * w);
            }
            const float t = compute_threshold(std::move(samples), opt.eta);
            d.thresholds.entries.push_back({neuron, t, opt.eta, n * h * w});

            TensorU8 neuron_masks({n, img_h, img_w});
            TensorF32 plane({h, w});
            for (std::int64_t i = 0; i < n; ++i) {
                const float* src = a.data() + ((i * c_count + c) * h * w);
                std::copy(src, src + h * w, plane.data());
                const TensorU8 m = upsampled_threshold_mask(plane, img_h, img_w, t);
                std::copy(m.data.begin(), m.data.end(),
                          neuron_masks.data.begin() + i * img_h * img_w);
            }

            const ConceptAssignment assign = assign_concept(neuron_masks, ds, sim, opt.floor);
            NeuronReading r;
            r.neuron = neuron;
            r.concept_id = assign.concept_id;
            r.score = assign.score;
            r.runner_up = assign.runner_up;
            r.runner_score = assign.runner_score;
            r.threshold = t;
            r.interpretable = assign.concept_id.has_value();
            d.result.neurons.push_back(std::move(r));
            d.masks.masks.emplace_back(neuron, std::move(neuron_masks));
        }
    }
    return d;
}

struct BaselineMasks {
    std::int32_t concept_id = 0;   // the concept the clean run assigned
    TensorU8 masks;                // N x H x W, usable as ground-truth stand-in
};

// The segmentation-free trick: reuse the clean run's binary masks as the
// neuron's concept masks.  A copy by construction.
inline BaselineMasks derive_baseline_masks(const Dissection& baseline,
                                           const NeuronAddress& neuron) {
    const NeuronReading& r = baseline.result.at(neuron);
    if (!r.concept_id.has_value()) {
        throw ConfigError("no baseline concept for " + neuron.to_string() +
                          ": the neuron is uninterpretable in the baseline run");
    }
    BaselineMasks out;
    out.concept_id = *r.concept_id;
    out.masks = baseline.masks.at(neuron);
    return out;
}

inline void save_dissection(const std::filesystem::path& dir, const Dissection& d) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["eta"] = d.eta;
    j["floor"] = d.floor;
    j["similarity"] = d.similarity;
    nlohmann::json samples = nlohmann::json::object();
    for (const auto& e : d.thresholds.entries) {
        samples[e.neuron.layer] = e.samples;
    }
    j["samples_per_layer"] = samples;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : d.result.neurons) {
        nlohmann::json row;
        row["layer"] = r.neuron.layer;
        row["channel"] = r.neuron.channel;
        row["concept"] =
            r.concept_id ? nlohmann::json(d.concepts.at(*r.concept_id).name) : nlohmann::json();
        row["score"] = r.score;
        if (r.runner_up) {
            row["runner_up"] = {{"concept", d.concepts.at(*r.runner_up).name},
                                {"score", r.runner_score}};
        } else {
            row["runner_up"] = nullptr;
        }
        row["threshold"] = static_cast<double>(r.threshold);
        row["interpretable"] = r.interpretable;
        rows.push_back(std::move(row));
    }
    j["neurons"] = std::move(rows);
    std::ofstream out(dir / "dissection.json", std::ios::trunc);
    if (!out) throw IntegrityError("io_error", "cannot write " + (dir / "dissection.json").string());
    out << j.dump(2) << "\n";

    save_concept_set(d.concepts, (dir / "concepts.json").string());

    BundleWriter writer;
    for (const auto& [neuron, masks] : d.masks.masks) writer.add_u8(neuron.to_string(), masks);
    writer.write(dir / "masks");
}

inline Dissection load_dissection(const std::filesystem::path& dir) {
    const auto report_path = dir / "dissection.json";
    std::ifstream in(report_path);
    if (!in) throw IntegrityError("missing_file", "no dissection.json in " + dir.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("bad_dissection_json",
                             "unparsable " + report_path.string() + ": " + e.what());
    }

    Dissection d;
    d.concepts = load_concept_set((dir / "concepts.json").string());
    const Bundle bundle = Bundle::load(dir / "masks");
    try {
        d.eta = j.at("eta").get<double>();
        d.floor = j.at("floor").get<double>();
        d.similarity = j.at("similarity").get<std::string>();
        const auto& samples = j.at("samples_per_layer");
        for (const auto& row : j.at("neurons")) {
            NeuronReading r;
            r.neuron.layer = row.at("layer").get<std::string>();
            r.neuron.channel = row.at("channel").get<std::int64_t>();
            if (!row.at("concept").is_null()) {
                r.concept_id = d.concepts.id_of(row.at("concept").get<std::string>());
            }
            r.score = row.at("score").get<double>();
            if (!row.at("runner_up").is_null()) {
                r.runner_up = d.concepts.id_of(row.at("runner_up").at("concept").get<std::string>());
                r.runner_score = row.at("runner_up").at("score").get<double>();
            }
            r.threshold = static_cast<float>(row.at("threshold").get<double>());
            r.interpretable = row.at("interpretable").get<bool>();

            ThresholdEntry t;
            t.neuron = r.neuron;
            t.threshold = r.threshold;
            t.eta = d.eta;
            t.samples = samples.at(r.neuron.layer).get<std::int64_t>();
            d.thresholds.entries.push_back(std::move(t));

            d.masks.masks.emplace_back(r.neuron, bundle.u8(r.neuron.to_string()));
            d.result.neurons.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("bad_dissection_json",
                             "malformed " + report_path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw IntegrityError("bad_dissection_json",
                             "inconsistent " + report_path.string() + ": " + e.what());
    }
    return d;
}

}  // namespace nemc
