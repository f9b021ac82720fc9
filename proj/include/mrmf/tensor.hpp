#pragma once

#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mrmf/errors.hpp"

namespace mrmf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

inline std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// Dense n-d array of f64, row-major, last axis fastest-varying.
// Sample tensors keep the channel axis last.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(const Shape& shape) {
        validate_shape(shape);
        Tensor t;
        t.shape = shape;
        t.data.assign(shape_numel(shape), 0.0);
        return t;
    }

    static Tensor from(const Shape& shape, std::vector<double> values) {
        validate_shape(shape);
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor data size " + std::to_string(values.size()) +
                             " does not match shape " + shape_to_string(shape));
        Tensor t;
        t.shape = shape;
        t.data = std::move(values);
        return t;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t ndim() const { return shape.size(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

private:
    static void validate_shape(const Shape& shape) {
        for (std::size_t e : shape)
            if (e == 0) throw ShapeError("tensor extent must be >= 1, got shape " + shape_to_string(shape));
    }
};

inline bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

// Exact comparison at the bit level (distinguishes -0.0, NaN payloads, ...).
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) return false;
    if (a.data.size() != b.data.size()) return false;
    return a.data.empty() ||
           std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

// Row-major strides in elements.
inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t d = shape.size(); d-- > 1;) strides[d - 1] = strides[d] * shape[d];
    return strides;
}

// Odometer increment over an n-d index space; returns false after wrap-around.
inline bool advance_index(std::vector<std::size_t>& idx, const Shape& extents) {
    for (std::size_t d = extents.size(); d-- > 0;) {
        if (++idx[d] < extents[d]) return true;
        idx[d] = 0;
    }
    return false;
}

}  // namespace mrmf
