#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "nemc/bundle.hpp"
#include "nemc/errors.hpp"
#include "nemc/layers.hpp"
#include "nemc/tensor.hpp"

namespace nemc {

// Address of a single unit: a channel of a named (conv) layer.
struct NeuronAddress {
    std::string layer;
    std::int64_t channel = 0;

    bool operator==(const NeuronAddress& o) const {
        return layer == o.layer && channel == o.channel;
    }
    bool operator<(const NeuronAddress& o) const {
        return layer != o.layer ? layer < o.layer : channel < o.channel;
    }
    std::string to_string() const { return layer + ":" + std::to_string(channel); }
};

inline NeuronAddress neuron_from_string(const std::string& s) {
    const auto pos = s.rfind(':');
    if (pos == std::string::npos || pos == 0 || pos + 1 >= s.size()) {
        throw ConfigError("neuron address must look like LAYER:CHANNEL, got " + s);
    }
    NeuronAddress n;
    n.layer = s.substr(0, pos);
    const std::string digits = s.substr(pos + 1);
    if (digits.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError("neuron channel is not a non-negative integer: " + s);
    }
    try {
        n.channel = std::stoll(digits);
    } catch (const std::exception&) {
        throw ConfigError("neuron channel is not a non-negative integer: " + s);
    }
    return n;
}

// A feed-forward CNN: ordered layers, the subset eligible for dissection
// (always conv outputs), the class count of the linear head, and the
// expected C x H x W input shape.
struct ModelSpec {
    std::vector<LayerOp> layers;
    std::vector<std::string> dissectable;
    std::int64_t num_classes = 0;
    std::vector<std::int64_t> input_shape;  // C, H, W

    std::int64_t layer_index(const std::string& name) const {
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].name == name) return static_cast<std::int64_t>(i);
        }
        throw ConfigError("model has no layer named " + name);
    }

    const LayerOp& layer(const std::string& name) const {
        return layers[static_cast<std::size_t>(layer_index(name))];
    }

    bool is_dissectable(const std::string& name) const {
        return std::find(dissectable.begin(), dissectable.end(), name) != dissectable.end();
    }

    // Shape of each layer's output for a batch of n images, index k = layer k.
    std::vector<std::vector<std::int64_t>> output_shapes(std::int64_t n) const {
        std::vector<std::vector<std::int64_t>> out;
        std::vector<std::int64_t> cur = {n, input_shape[0], input_shape[1], input_shape[2]};
        for (const auto& op : layers) {
            cur = layer_output_shape(op, cur);
            out.push_back(cur);
        }
        return out;
    }

    std::int64_t channel_count(const std::string& layer_name) const {
        const auto shapes = output_shapes(1);
        const auto idx = layer_index(layer_name);
        const auto& s = shapes[static_cast<std::size_t>(idx)];
        if (s.size() != 4) throw ConfigError(layer_name + " has no channel axis");
        return s[1];
    }

    void validate() const {
        if (layers.empty()) throw ConfigError("model has no layers");
        if (input_shape.size() != 3) throw ConfigError("input_shape must be C,H,W");
        if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
        std::set<std::string> names;
        for (const auto& op : layers) {
            if (op.name.empty()) throw ConfigError("layer names must be non-empty");
            if (!names.insert(op.name).second) throw ConfigError("duplicate layer name " + op.name);
        }
        for (const auto& d : dissectable) {
            const auto idx = layer_index(d);
            if (layers[static_cast<std::size_t>(idx)].kind != LayerKind::Conv2d) {
                throw ConfigError("dissectable layer " + d + " is not a conv output");
            }
        }
        // Chain the shapes; throws if anything is inconsistent.
        const auto shapes = output_shapes(1);
        const auto& logits = shapes.back();
        if (logits.size() != 2 || logits[1] != num_classes) {
            throw ConfigError("final layer width does not match num_classes");
        }
    }
};

// Forward pass to logits.  Batch must be N x C x H x W matching input_shape.
inline TensorF32 model_forward(const ModelSpec& model, const TensorF32& batch) {
    if (batch.rank() != 4 || batch.dim(1) != model.input_shape[0] ||
        batch.dim(2) != model.input_shape[1] || batch.dim(3) != model.input_shape[2]) {
        throw ConfigError("batch shape " + shape_to_string(batch.shape()) +
                          " does not match model input " + shape_to_string(model.input_shape));
    }
    TensorF32 cur = batch;
    for (const auto& op : model.layers) cur = layer_forward(op, cur);
    return cur;
}

// Argmax class per image; ties resolve toward the lower class index.
inline std::vector<std::int32_t> classify(const ModelSpec& model, const TensorF32& batch) {
    const TensorF32 logits = model_forward(model, batch);
    logits.check_finite("classify");
    std::vector<std::int32_t> out(static_cast<std::size_t>(logits.dim(0)));
    for (std::int64_t b = 0; b < logits.dim(0); ++b) {
        std::int64_t best = 0;
        float best_v = logits.at2(b, 0);
        for (std::int64_t c = 1; c < logits.dim(1); ++c) {
            const float v = logits.at2(b, c);
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        out[static_cast<std::size_t>(b)] = static_cast<std::int32_t>(best);
    }
    return out;
}

inline double classification_accuracy(const ModelSpec& model, const TensorF32& images,
                                      const std::vector<std::int32_t>& labels) {
    if (images.dim(0) != static_cast<std::int64_t>(labels.size())) {
        throw ConfigError("label count does not match image count");
    }
    const auto pred = classify(model, images);
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (pred[i] == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// Persistence: model.json (architecture) + weights/ tensor bundle.
// ---------------------------------------------------------------------------

inline void save_model(const ModelSpec& model, const std::filesystem::path& dir) {
    model.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["format"] = "nemc-model";
    j["version"] = 1;
    j["input_shape"] = model.input_shape;
    j["num_classes"] = model.num_classes;
    j["dissectable"] = model.dissectable;
    nlohmann::json layers = nlohmann::json::array();
    BundleWriter weights;
    for (const auto& op : model.layers) {
        nlohmann::json l;
        l["name"] = op.name;
        l["kind"] = layer_kind_name(op.kind);
        nlohmann::json params = nlohmann::json::object();
        if (op.kind == LayerKind::Conv2d) {
            params["stride"] = op.stride;
            params["padding"] = op.padding;
            weights.add_f32(op.name + ".weight", op.weights);
            weights.add_f32(op.name + ".bias", op.bias);
        } else if (op.kind == LayerKind::MaxPool) {
            params["k"] = op.pool_k;
            params["stride"] = op.pool_stride;
        } else if (op.kind == LayerKind::Linear) {
            weights.add_f32(op.name + ".weight", op.weights);
            weights.add_f32(op.name + ".bias", op.bias);
        }
        l["params"] = params;
        layers.push_back(l);
    }
    j["layers"] = layers;
    std::ofstream f(dir / "model.json", std::ios::trunc);
    if (!f) throw IntegrityError("io_error", "cannot write model.json in " + dir.string());
    f << j.dump(2) << "\n";
    weights.write(dir / "weights");
}

inline ModelSpec load_model(const std::filesystem::path& dir) {
    std::ifstream f(dir / "model.json");
    if (!f) throw IntegrityError("missing_file", "no model.json in " + dir.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("bad_model_json", std::string("unparsable model.json: ") + e.what());
    }
    ModelSpec model;
    try {
        model.input_shape = j.at("input_shape").get<std::vector<std::int64_t>>();
        model.num_classes = j.at("num_classes").get<std::int64_t>();
        model.dissectable = j.at("dissectable").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError("bad_model_json", std::string("malformed model.json: ") + e.what());
    }
    if (!j.contains("layers") || !j["layers"].is_array()) {
        throw IntegrityError("bad_model_json", "model.json lacks a layers array");
    }
    const Bundle weights = Bundle::load(dir / "weights");
    for (const auto& l : j["layers"]) {
        LayerOp op;
        try {
            op.name = l.at("name").get<std::string>();
            op.kind = layer_kind_from_name(l.at("kind").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw IntegrityError("bad_model_json", std::string("malformed layer entry: ") + e.what());
        }
        const auto params = l.value("params", nlohmann::json::object());
        if (op.kind == LayerKind::Conv2d) {
            op.stride = params.value("stride", 1);
            op.padding = params.value("padding", 0);
            op.weights = weights.f32(op.name + ".weight");
            op.bias = weights.f32(op.name + ".bias");
            if (op.weights.rank() != 4 || op.bias.rank() != 1 ||
                op.bias.dim(0) != op.weights.dim(0)) {
                throw IntegrityError("shape_mismatch", "conv tensors for " + op.name +
                                                           " have inconsistent shapes");
            }
        } else if (op.kind == LayerKind::MaxPool) {
            op.pool_k = params.value("k", 2);
            op.pool_stride = params.value("stride", 2);
        } else if (op.kind == LayerKind::Linear) {
            op.weights = weights.f32(op.name + ".weight");
            op.bias = weights.f32(op.name + ".bias");
            if (op.weights.rank() != 2 || op.bias.rank() != 1 ||
                op.bias.dim(0) != op.weights.dim(0)) {
                throw IntegrityError("shape_mismatch", "linear tensors for " + op.name +
                                                           " have inconsistent shapes");
            }
        }
        model.layers.push_back(std::move(op));
    }
    try {
        model.validate();
    } catch (const ConfigError& e) {
        throw IntegrityError("shape_mismatch", std::string("stored model is inconsistent: ") + e.what());
    }
    return model;
}

}  // namespace nemc
