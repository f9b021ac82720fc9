#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrmf/errors.hpp"
#include "mrmf/model.hpp"
#include "mrmf/rng.hpp"

namespace mrmf {

struct ShapeChain {
    std::vector<Shape> outputs;      // one per layer
    std::size_t flatten_layer = 0;   // index of the flatten layer, if any
    std::size_t flatten_size = 0;    // 0 when the chain has no flatten
    bool has_flatten = false;
};

inline ShapeChain propagate_shapes(const std::vector<LayerSpec>& layers, const Shape& input_shape) {
    ShapeChain chain;
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        LayerSpec s = layers[i];
        try {
            validate_layer_spec(s);
            if (s.kind == LayerKind::conv && s.in_channels == 0) s.in_channels = cur.back();
            if (s.kind == LayerKind::batch_norm && s.features == 0 && cur.size() >= 2)
                s.features = cur.back();
            if (s.kind == LayerKind::fully_connected && s.in_features == 0 && cur.size() == 1)
                s.in_features = cur[0];
            cur = layer_output_shape(s, cur);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
        }
        if (s.kind == LayerKind::flatten && !chain.has_flatten) {
            chain.has_flatten = true;
            chain.flatten_layer = i;
            chain.flatten_size = cur[0];
        }
        chain.outputs.push_back(cur);
    }
    return chain;
}

// Bottom group: input side through the flatten layer. Top group: everything
// after it, which must consist of fully connected and activation layers only.
struct LayerGroups {
    std::vector<std::size_t> bottom;
    std::vector<std::size_t> top;
};

inline LayerGroups split_layer_groups(const Model& m) {
    std::size_t flatten_count = 0;
    std::size_t flatten_at = 0;
    for (std::size_t i = 0; i < m.layers.size(); ++i)
        if (m.layers[i].kind == LayerKind::flatten) {
            ++flatten_count;
            flatten_at = i;
        }
    if (flatten_count != 1)
        throw FusionError("model must contain exactly one flatten layer, found " +
                          std::to_string(flatten_count));
    if (flatten_at + 1 == m.layers.size())
        throw FusionError("no layers after flatten; the top group would be empty");

    LayerGroups g;
    for (std::size_t i = 0; i <= flatten_at; ++i) g.bottom.push_back(i);
    for (std::size_t i = flatten_at + 1; i < m.layers.size(); ++i) {
        const LayerKind k = m.layers[i].kind;
        if (k != LayerKind::fully_connected && k != LayerKind::relu && k != LayerKind::tanh)
            throw FusionError("layer " + std::to_string(i) + " (" + layer_kind_name(k) +
                              ") is not allowed after flatten");
        g.top.push_back(i);
    }
    return g;
}

// Rebuilds the reference architecture for a coarser input resolution: the
// first fully connected layer's in-features are re-derived from the new
// flattened size, everything else is preserved. Parameters are freshly seeded
// when an rng is supplied, zero otherwise.
inline Model adjust_model(const Model& reference, const Shape& coarse_input_shape,
                          Rng* rng = nullptr) {
    if (coarse_input_shape.size() != reference.input_shape.size() ||
        coarse_input_shape.back() != reference.input_shape.back())
        throw FusionError("coarse input " + shape_to_string(coarse_input_shape) +
                          " must keep the rank and channel count of " +
                          shape_to_string(reference.input_shape));
    const LayerGroups groups = split_layer_groups(reference);

    std::vector<LayerSpec> specs = reference.layers;
    for (std::size_t i : groups.top)
        if (specs[i].kind == LayerKind::fully_connected) {
            specs[i].in_features = 0;  // re-derive from the coarse flatten size
            break;
        }
    Model adjusted = make_model(coarse_input_shape, std::move(specs));
    if (rng) init_params(adjusted, *rng);
    return adjusted;
}

struct FuseOptions {
    // Ablation switch: reinitialize the first fully connected layer instead
    // of carrying the dense model's copy.
    bool reinit_first_fc = false;
    std::uint64_t reinit_seed = 0;
};

// Assembles the fused model: dense architecture and input resolution, bottom
// group parameters (and batch-norm running stats) taken bitwise from the
// coarse model, first fully connected layer and the rest of the top group
// taken bitwise from the dense model.
inline Model fuse(const Model& coarse, const Model& dense, const FuseOptions& options = {}) {
    if (coarse.layers.size() != dense.layers.size())
        throw FusionError("layer count mismatch: coarse has " +
                          std::to_string(coarse.layers.size()) + ", dense has " +
                          std::to_string(dense.layers.size()));
    for (std::size_t i = 0; i < coarse.layers.size(); ++i)
        if (coarse.layers[i].kind != dense.layers[i].kind)
            throw FusionError("layer " + std::to_string(i) + " kind mismatch: coarse " +
                              layer_kind_name(coarse.layers[i].kind) + " vs dense " +
                              layer_kind_name(dense.layers[i].kind));

    const LayerGroups groups = split_layer_groups(dense);
    Model fused = make_model(dense.input_shape, dense.layers);

    for (std::size_t i : groups.bottom) {
        if (coarse.params[i].tensors.size() != dense.params[i].tensors.size())
            throw FusionError("layer " + std::to_string(i) + " parameter layout mismatch");
        for (std::size_t j = 0; j < coarse.params[i].tensors.size(); ++j) {
            if (coarse.params[i].tensors[j].shape != fused.params[i].tensors[j].shape)
                throw FusionError("bottom-group shape mismatch at layer " + std::to_string(i) +
                                  ": coarse " + shape_to_string(coarse.params[i].tensors[j].shape) +
                                  " vs " + shape_to_string(fused.params[i].tensors[j].shape));
            fused.params[i].tensors[j] = coarse.params[i].tensors[j];
        }
        for (std::size_t j = 0; j < coarse.state[i].tensors.size(); ++j)
            fused.state[i].tensors[j] = coarse.state[i].tensors[j];
    }
    for (std::size_t i : groups.top) {
        fused.params[i] = dense.params[i];
        fused.state[i] = dense.state[i];
    }

    if (options.reinit_first_fc) {
        for (std::size_t i : groups.top)
            if (fused.layers[i].kind == LayerKind::fully_connected) {
                Rng rng(derive_seed(options.reinit_seed, 0x46433166ull));
                const LayerSpec& s = fused.layers[i];
                const double bound = std::sqrt(1.0 / static_cast<double>(s.in_features));
                for (double& v : fused.params[i].tensors[0].data) v = rng.uniform(-bound, bound);
                for (double& v : fused.params[i].tensors[1].data) v = rng.uniform(-bound, bound);
                break;
            }
    }
    ++fused.version;
    return fused;
}

}  // namespace mrmf
