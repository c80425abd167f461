#pragma once

#include <cstring>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nemc/errors.hpp"
#include "nemc/layers.hpp"
#include "nemc/model.hpp"
#include "nemc/tensor.hpp"

namespace nemc {

// Record of one forward pass: the batch plus every layer boundary activation.
// boundary[0] is the batch itself, boundary[k+1] the output of layer k.
// Weights are fixed, so this is everything backward passes need.
struct Tape {
    const ModelSpec* model = nullptr;
    std::vector<TensorF32> boundary;

    const TensorF32& input_of(std::size_t layer_idx) const { return boundary[layer_idx]; }
    const TensorF32& output_of(std::size_t layer_idx) const { return boundary[layer_idx + 1]; }
    const TensorF32& batch() const { return boundary.front(); }
    const TensorF32& logits() const { return boundary.back(); }
};

struct ForwardResult {
    std::map<std::string, TensorF32> activations;
    TensorF32 logits;
    Tape tape;
};

// Runs the model on a batch and collects the named layers' outputs plus the
// final logits and a tape for gradient computation.  Layer names must exist;
// batch shape must match the model's declared input.
inline ForwardResult forward_collect(const ModelSpec& model, const TensorF32& batch,
                                     const std::vector<std::string>& layer_names) {
    if (batch.rank() != 4 || batch.dim(1) != model.input_shape[0] ||
        batch.dim(2) != model.input_shape[1] || batch.dim(3) != model.input_shape[2]) {
        throw ConfigError("batch shape " + shape_to_string(batch.shape()) +
                          " does not match model input " + shape_to_string(model.input_shape));
    }
    for (const auto& name : layer_names) model.layer_index(name);  // existence check

    ForwardResult res;
    res.tape.model = &model;
    res.tape.boundary.reserve(model.layers.size() + 1);
    res.tape.boundary.push_back(batch);
    for (const auto& op : model.layers) {
        res.tape.boundary.push_back(layer_forward(op, res.tape.boundary.back()));
    }
    res.logits = res.tape.logits();
    res.logits.check_finite("forward_collect logits");
    for (const auto& name : layer_names) {
        const auto idx = static_cast<std::size_t>(model.layer_index(name));
        res.activations.emplace(name, res.tape.output_of(idx));
    }
    return res;
}

// A scalar objective that reads one layer's activations.  `value` maps the
// activation tensor to the scalar; `adjoint` returns d value / d activation
// with the activation's shape.  Compositions over a single layer cover every
// objective in this library (masked activation averages and their
// differences); sums over layers can be expressed by accumulating gradients
// from several objectives.
struct LayerObjective {
    std::string layer;
    std::function<double(const TensorF32&)> value;
    std::function<TensorF32(const TensorF32&)> adjoint;
};

inline double objective_value(const LayerObjective& obj, const Tape& tape) {
    const auto idx = static_cast<std::size_t>(tape.model->layer_index(obj.layer));
    return obj.value(tape.output_of(idx));
}

// Reverse-mode gradient of the objective w.r.t. the input batch.  The tape
// must come from forward_collect on the same model and bitwise-identical
// batch; anything else is an invalid-argument error.  Weights receive no
// gradient.  Relu kinks use subgradient 0, maxpool ties route to the first
// maximal element in scan order (matching the forward kernels).
inline TensorF32 grad_wrt_input(const LayerObjective& obj, const TensorF32& batch,
                                const Tape& tape) {
    if (tape.model == nullptr || tape.boundary.empty()) {
        throw std::invalid_argument("tape is empty");
    }
    const TensorF32& taped = tape.batch();
    if (!taped.same_shape(batch) ||
        std::memcmp(taped.data(), batch.data(), static_cast<std::size_t>(batch.size()) * 4) != 0) {
        throw std::invalid_argument("tape does not match the supplied batch");
    }
    const std::int64_t layer_idx = tape.model->layer_index(obj.layer);
    TensorF32 adj = obj.adjoint(tape.output_of(static_cast<std::size_t>(layer_idx)));
    if (!adj.same_shape(tape.output_of(static_cast<std::size_t>(layer_idx)))) {
        throw std::invalid_argument("objective adjoint shape does not match layer activations");
    }
    for (std::int64_t k = layer_idx; k >= 0; --k) {
        const LayerOp& op = tape.model->layers[static_cast<std::size_t>(k)];
        adj = layer_backward_input(op, tape.input_of(static_cast<std::size_t>(k)), adj);
    }
    adj.check_finite("grad_wrt_input");
    return adj;
}

}  // namespace nemc
