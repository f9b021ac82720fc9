#pragma once

#include <cmath>

#include "mrmf/errors.hpp"
#include "mrmf/tensor.hpp"

namespace mrmf {

// Mean squared error over every element of the batch: (1/(B*m)) * sum((p-t)^2).
// Elements are accumulated in flat index order.
inline double mse_loss(const Tensor& pred, const Tensor& target) {
    if (!same_shape(pred, target))
        throw ShapeError("mse: prediction " + shape_to_string(pred.shape) + " vs target " +
                         shape_to_string(target.shape));
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = pred.data[i] - target.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

inline Tensor mse_loss_grad(const Tensor& pred, const Tensor& target) {
    if (!same_shape(pred, target))
        throw ShapeError("mse: prediction " + shape_to_string(pred.shape) + " vs target " +
                         shape_to_string(target.shape));
    Tensor g = Tensor::zeros(pred.shape);
    const double scale = 2.0 / static_cast<double>(pred.numel());
    for (std::size_t i = 0; i < pred.numel(); ++i)
        g.data[i] = scale * (pred.data[i] - target.data[i]);
    return g;
}

}  // namespace mrmf
