#pragma once

// Probing dataset: images, per-concept ground-truth pixel masks, labels,
// the concept vocabulary, and a provenance trail (generation seed plus an
// append-only corruption log).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nemc/bundle.hpp"
#include "nemc/concepts.hpp"
#include "nemc/errors.hpp"
#include "nemc/tensor.hpp"

namespace nemc {

struct Provenance {
    std::uint64_t generation_seed = 0;
    nlohmann::json corruption_log = nlohmann::json::array();
};

struct ProbingDataset {
    TensorF32 images;  // N x 3 x H x W, values in [0,1]
    std::vector<std::int32_t> labels;
    TensorU8 masks;  // N x K x H x W, values in {0,1}
    ConceptSet concepts;
    Provenance provenance;

    ProbingDataset() : images({1, 3, 1, 1}) {}

    std::int64_t n() const { return images.dim(0); }
    std::int64_t height() const { return images.dim(2); }
    std::int64_t width() const { return images.dim(3); }

    std::uint8_t mask_at(std::int64_t image, std::int32_t conceptId, std::int64_t y,
                         std::int64_t x) const {
        const std::int64_t k = concepts.size(), h = height(), w = width();
        return masks.data[static_cast<std::size_t>(((image * k + conceptId) * h + y) * w + x)];
    }

    bool concept_present(std::int64_t image, std::int32_t conceptId) const {
        const std::int64_t k = concepts.size(), plane = height() * width();
        const std::size_t base = static_cast<std::size_t>((image * k + conceptId) * plane);
        for (std::int64_t p = 0; p < plane; ++p)
            if (masks.data[base + static_cast<std::size_t>(p)]) return true;
        return false;
    }

    std::int64_t concept_area(std::int64_t image, std::int32_t conceptId) const {
        const std::int64_t k = concepts.size(), plane = height() * width();
        const std::size_t base = static_cast<std::size_t>((image * k + conceptId) * plane);
        std::int64_t area = 0;
        for (std::int64_t p = 0; p < plane; ++p)
            if (masks.data[base + static_cast<std::size_t>(p)]) ++area;
        return area;
    }

    // One concept plane as a flat H*W vector.
    std::vector<std::uint8_t> mask_plane(std::int64_t image, std::int32_t conceptId) const {
        const std::int64_t k = concepts.size(), plane = height() * width();
        const std::size_t base = static_cast<std::size_t>((image * k + conceptId) * plane);
        return std::vector<std::uint8_t>(masks.data.begin() + static_cast<std::int64_t>(base),
                                         masks.data.begin() + static_cast<std::int64_t>(base) +
                                             plane);
    }

    // One image as a 1 x 3 x H x W batch.
    TensorF32 image_batch(std::int64_t image) const {
        const std::int64_t per = 3 * height() * width();
        std::vector<float> v(images.data() + image * per, images.data() + (image + 1) * per);
        return TensorF32({1, 3, height(), width()}, std::move(v));
    }

    void validate() const {
        concepts.validate();
        if (images.rank() != 4 || images.dim(1) != 3) {
            throw IntegrityError("bad_image_shape",
                                 "images must be N x 3 x H x W, got " +
                                     shape_to_string(images.shape()));
        }
        const std::int64_t N = n(), k = concepts.size(), h = height(), w = width();
        if (masks.shape != std::vector<std::int64_t>{N, k, h, w}) {
            throw IntegrityError("bad_mask_shape",
                                 "masks must be N x K x H x W matching images and concepts");
        }
        if (static_cast<std::int64_t>(labels.size()) != N) {
            throw IntegrityError("bad_labels", "label count does not match image count");
        }
        for (const auto lbl : labels) {
            if (lbl < 0 || lbl >= k) {
                throw IntegrityError("bad_labels", "label out of concept range");
            }
        }
        for (std::int64_t i = 0; i < images.size(); ++i) {
            const float v = images[i];
            if (!(v >= 0.0f && v <= 1.0f)) {
                throw IntegrityError("pixel_out_of_range",
                                     "pixel value outside [0,1]: " + std::to_string(v));
            }
        }
        for (const auto m : masks.data) {
            if (m > 1) throw IntegrityError("bad_mask_value", "mask entries must be 0 or 1");
        }
    }
};

inline void save_dataset(const ProbingDataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    BundleWriter w;
    w.add_f32("images", ds.images);
    w.add_u8("masks", ds.masks);
    w.add_i32("labels", ds.labels, {static_cast<std::int64_t>(ds.labels.size())});
    w.write(dir);
    save_concept_set(ds.concepts, dir + "/concepts.json");
    nlohmann::json prov{{"generation_seed", ds.provenance.generation_seed},
                        {"corruption_log", ds.provenance.corruption_log}};
    std::ofstream out(dir + "/provenance.json");
    if (!out) throw ConfigError("cannot write provenance file in " + dir);
    out << prov.dump(2) << "\n";
}

inline ProbingDataset load_dataset(const std::string& dir) {
    const Bundle bundle = Bundle::load(dir);
    ProbingDataset ds;
    ds.images = bundle.f32("images");
    ds.masks = bundle.u8("masks");
    const auto labelShape = bundle.shape("labels");
    ds.labels = bundle.i32("labels");

    std::ifstream cin(dir + "/concepts.json");
    if (!cin) throw IntegrityError("missing_file", "dataset has no concepts.json: " + dir);
    nlohmann::json cj;
    try {
        cin >> cj;
        ds.concepts = concept_set_from_json(cj);
    } catch (const std::exception& e) {
        throw IntegrityError("bad_concepts_json", e.what());
    }

    std::ifstream pin(dir + "/provenance.json");
    if (!pin) throw IntegrityError("missing_file", "dataset has no provenance.json: " + dir);
    try {
        nlohmann::json pj;
        pin >> pj;
        ds.provenance.generation_seed = pj.at("generation_seed").get<std::uint64_t>();
        ds.provenance.corruption_log = pj.at("corruption_log");
        if (!ds.provenance.corruption_log.is_array()) {
            throw IntegrityError("bad_provenance", "corruption_log must be an array");
        }
    } catch (const IntegrityError&) {
        throw;
    } catch (const std::exception& e) {
        throw IntegrityError("bad_provenance", e.what());
    }

    if (labelShape.size() != 1) {
        throw IntegrityError("bad_labels", "labels entry must be rank 1");
    }
    ds.validate();
    return ds;
}

}  // namespace nemc
