#pragma once

#include "mrmf/dataset.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/model.hpp"

namespace mrmf {

// Builds the pooled-input variant of a coarse model: an average-pooling layer
// with kernel = stride = factors is prepended so the model consumes
// original-resolution samples directly. Because the pooling layer and the
// block-average downsampler accumulate in the same order, training this model
// on original data reproduces the coarse model's trajectory on materialized
// coarse data bit for bit.
inline Model prepend_input_pooling(const Model& coarse, const ResolutionFactors& factors,
                                   const Shape& original_input_shape) {
    validate_factors(factors, original_input_shape);
    Shape reduced = original_input_shape;
    for (std::size_t d = 0; d + 1 < reduced.size(); ++d) reduced[d] /= factors.k[d];
    if (reduced != coarse.input_shape)
        throw FusionError("pooling by (" + factors_to_string(factors) + ") maps " +
                          shape_to_string(original_input_shape) + " to " +
                          shape_to_string(reduced) + ", but the model expects " +
                          shape_to_string(coarse.input_shape));

    std::vector<LayerSpec> specs;
    specs.reserve(coarse.layers.size() + 1);
    specs.push_back(avg_pool_layer(factors.k));
    specs.insert(specs.end(), coarse.layers.begin(), coarse.layers.end());

    Model pooled = make_model(original_input_shape, std::move(specs));
    for (std::size_t i = 0; i < coarse.layers.size(); ++i) {
        pooled.params[i + 1] = coarse.params[i];
        pooled.state[i + 1] = coarse.state[i];
    }
    ++pooled.version;
    return pooled;
}

}  // namespace mrmf
