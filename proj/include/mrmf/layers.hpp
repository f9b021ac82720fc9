#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mrmf/errors.hpp"
#include "mrmf/rng.hpp"
#include "mrmf/tensor.hpp"

namespace mrmf {

enum class LayerKind : std::uint8_t {
    conv = 0,
    avg_pool = 1,
    batch_norm = 2,
    relu = 3,
    tanh = 4,
    flatten = 5,
    fully_connected = 6,
};

inline const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::avg_pool: return "avgpool";
        case LayerKind::batch_norm: return "batchnorm";
        case LayerKind::relu: return "relu";
        case LayerKind::tanh: return "tanh";
        case LayerKind::flatten: return "flatten";
        case LayerKind::fully_connected: return "fc";
    }
    return "?";
}

// Batch-norm hyperparameters are fixed project-wide.
inline constexpr double kBnMomentum = 0.1;
inline constexpr double kBnEps = 1e-5;

// Architecture description of one layer. Channel counts / feature widths of
// zero mean "infer from the incoming shape" and are resolved at model build.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;

    // conv / avg_pool, one entry per spatial axis
    std::vector<std::size_t> kernel;
    std::vector<std::size_t> stride;
    std::vector<std::size_t> pad;

    std::size_t in_channels = 0;   // conv
    std::size_t out_channels = 0;  // conv
    std::size_t features = 0;      // batch_norm
    std::size_t in_features = 0;   // fully_connected
    std::size_t out_features = 0;  // fully_connected

    bool operator==(const LayerSpec&) const = default;
};

inline LayerSpec conv_layer(std::vector<std::size_t> kernel, std::vector<std::size_t> stride,
                            std::vector<std::size_t> pad, std::size_t in_channels,
                            std::size_t out_channels) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.kernel = std::move(kernel);
    s.stride = std::move(stride);
    s.pad = std::move(pad);
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    return s;
}

inline LayerSpec avg_pool_layer(std::vector<std::size_t> kernel, std::vector<std::size_t> stride = {},
                                std::vector<std::size_t> pad = {}) {
    LayerSpec s;
    s.kind = LayerKind::avg_pool;
    s.stride = stride.empty() ? kernel : std::move(stride);
    s.pad = pad.empty() ? std::vector<std::size_t>(kernel.size(), 0) : std::move(pad);
    s.kernel = std::move(kernel);
    return s;
}

inline LayerSpec batch_norm_layer(std::size_t features = 0) {
    LayerSpec s;
    s.kind = LayerKind::batch_norm;
    s.features = features;
    return s;
}

inline LayerSpec relu_layer() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
}

inline LayerSpec tanh_layer() {
    LayerSpec s;
    s.kind = LayerKind::tanh;
    return s;
}

inline LayerSpec flatten_layer() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

inline LayerSpec fc_layer(std::size_t in_features, std::size_t out_features) {
    LayerSpec s;
    s.kind = LayerKind::fully_connected;
    s.in_features = in_features;
    s.out_features = out_features;
    return s;
}

inline void validate_layer_spec(const LayerSpec& s) {
    auto fail = [&](const std::string& msg) {
        throw ShapeError(std::string(layer_kind_name(s.kind)) + " layer: " + msg);
    };
    switch (s.kind) {
        case LayerKind::conv:
        case LayerKind::avg_pool: {
            const std::size_t n = s.kernel.size();
            if (n < 1 || n > 3) fail("kernel dimensionality must be 1..3, got " + std::to_string(n));
            if (s.stride.size() != n || s.pad.size() != n) fail("kernel/stride/pad rank mismatch");
            for (std::size_t d = 0; d < n; ++d) {
                if (s.kernel[d] < 1) fail("kernel extent must be >= 1");
                if (s.stride[d] < 1) fail("stride must be >= 1");
            }
            if (s.kind == LayerKind::conv && s.out_channels < 1) fail("out_channels must be >= 1");
            break;
        }
        case LayerKind::fully_connected:
            if (s.out_features < 1) fail("out_features must be >= 1");
            break;
        default:
            break;
    }
}

// Output sample shape of a layer given its input sample shape
// (spatial extents + channel for spatial layers, a single width after flatten).
inline Shape layer_output_shape(const LayerSpec& s, const Shape& in) {
    auto fail = [&](const std::string& msg) {
        throw ShapeError(std::string(layer_kind_name(s.kind)) + " layer: " + msg +
                         " (input " + shape_to_string(in) + ")");
    };
    switch (s.kind) {
        case LayerKind::conv:
        case LayerKind::avg_pool: {
            const std::size_t n = s.kernel.size();
            if (in.size() != n + 1) fail("expected " + std::to_string(n) + " spatial axes + channel");
            if (s.kind == LayerKind::conv && s.in_channels != 0 && in.back() != s.in_channels)
                fail("expected " + std::to_string(s.in_channels) + " input channels, got " +
                     std::to_string(in.back()));
            Shape out(n + 1);
            for (std::size_t d = 0; d < n; ++d) {
                const std::size_t padded = in[d] + 2 * s.pad[d];
                if (padded < s.kernel[d])
                    fail("axis " + std::to_string(d) + " extent " + std::to_string(in[d]) +
                         " underflows kernel " + std::to_string(s.kernel[d]));
                out[d] = (padded - s.kernel[d]) / s.stride[d] + 1;
            }
            out[n] = s.kind == LayerKind::conv ? s.out_channels : in.back();
            return out;
        }
        case LayerKind::batch_norm:
            if (in.size() < 2) fail("expects spatial input with a channel axis");
            if (s.features != 0 && in.back() != s.features)
                fail("expected " + std::to_string(s.features) + " channels, got " +
                     std::to_string(in.back()));
            return in;
        case LayerKind::relu:
        case LayerKind::tanh:
            return in;
        case LayerKind::flatten:
            return Shape{shape_numel(in)};
        case LayerKind::fully_connected:
            if (in.size() != 1) fail("expects flattened input");
            if (s.in_features != 0 && in[0] != s.in_features)
                fail("expected " + std::to_string(s.in_features) + " input features, got " +
                     std::to_string(in[0]));
            return Shape{s.out_features};
    }
    fail("unknown layer kind");
    return {};
}

namespace detail {

// Flat-offset table for every kernel position, plus the per-axis indices
// needed for bounds checks when padding is in play.
struct KernelOffsets {
    std::vector<long long> delta;                  // offset in elements relative to the window origin
    std::vector<std::vector<std::size_t>> coords;  // per-axis kernel index
    std::size_t count = 0;
};

inline KernelOffsets make_kernel_offsets(const std::vector<std::size_t>& kernel,
                                         const std::vector<std::size_t>& in_strides_spatial) {
    KernelOffsets k;
    std::vector<std::size_t> idx(kernel.size(), 0);
    do {
        long long delta = 0;
        for (std::size_t d = 0; d < kernel.size(); ++d)
            delta += static_cast<long long>(idx[d]) * static_cast<long long>(in_strides_spatial[d]);
        k.delta.push_back(delta);
        k.coords.push_back(idx);
    } while (advance_index(idx, kernel));
    k.count = k.delta.size();
    return k;
}

struct WindowGeometry {
    std::size_t batch = 0;
    std::size_t channels_in = 0;
    Shape in_spatial;
    Shape out_spatial;
    std::vector<std::size_t> in_strides_spatial;  // element strides of the spatial axes (channel innermost)
    std::size_t in_sample_stride = 0;
    std::size_t out_positions = 0;
    bool padded = false;
};

inline WindowGeometry window_geometry(const LayerSpec& s, const Shape& batch_shape) {
    const std::size_t n = s.kernel.size();
    if (batch_shape.size() != n + 2)
        throw ShapeError(std::string(layer_kind_name(s.kind)) +
                         " layer: batch input must be [batch, spatial..., channel], got " +
                         shape_to_string(batch_shape));
    WindowGeometry g;
    g.batch = batch_shape[0];
    g.channels_in = batch_shape[n + 1];
    g.in_spatial.assign(batch_shape.begin() + 1, batch_shape.begin() + 1 + n);
    Shape sample(batch_shape.begin() + 1, batch_shape.end());
    Shape out_sample = layer_output_shape(s, sample);
    g.out_spatial.assign(out_sample.begin(), out_sample.end() - 1);
    g.in_strides_spatial.resize(n);
    std::size_t stride = g.channels_in;
    for (std::size_t d = n; d-- > 0;) {
        g.in_strides_spatial[d] = stride;
        stride *= g.in_spatial[d];
    }
    g.in_sample_stride = stride;
    g.out_positions = shape_numel(g.out_spatial);
    for (std::size_t p : s.pad) g.padded |= p > 0;
    return g;
}

// Window origin of an output position, as a flat element offset when fully in
// bounds. With padding the origin may be out of range; callers then check the
// per-axis coordinates against the input extents.
inline long long window_origin(const LayerSpec& s, const WindowGeometry& g,
                               const std::vector<std::size_t>& out_idx) {
    long long base = 0;
    for (std::size_t d = 0; d < out_idx.size(); ++d) {
        const long long pos = static_cast<long long>(out_idx[d] * s.stride[d]) -
                              static_cast<long long>(s.pad[d]);
        base += pos * static_cast<long long>(g.in_strides_spatial[d]);
    }
    return base;
}

inline bool window_tap_in_bounds(const LayerSpec& s, const WindowGeometry& g,
                                 const std::vector<std::size_t>& out_idx,
                                 const std::vector<std::size_t>& kcoord) {
    for (std::size_t d = 0; d < out_idx.size(); ++d) {
        const long long pos = static_cast<long long>(out_idx[d] * s.stride[d]) -
                              static_cast<long long>(s.pad[d]) + static_cast<long long>(kcoord[d]);
        if (pos < 0 || pos >= static_cast<long long>(g.in_spatial[d])) return false;
    }
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

// Weight layout: [out_channels, kernel..., in_channels]; bias: [out_channels].
inline Shape conv_weight_shape(const LayerSpec& s) {
    Shape w{s.out_channels};
    w.insert(w.end(), s.kernel.begin(), s.kernel.end());
    w.push_back(s.in_channels);
    return w;
}

inline Tensor conv_forward(const LayerSpec& s, const Tensor& weight, const Tensor& bias,
                           const Tensor& in) {
    const auto g = detail::window_geometry(s, in.shape);
    const auto k = detail::make_kernel_offsets(s.kernel, g.in_strides_spatial);
    const std::size_t cin = g.channels_in;
    const std::size_t cout = s.out_channels;

    Shape out_shape{g.batch};
    out_shape.insert(out_shape.end(), g.out_spatial.begin(), g.out_spatial.end());
    out_shape.push_back(cout);
    Tensor out = Tensor::zeros(out_shape);

    const double* X = in.data.data();
    const double* W = weight.data.data();
    const double* B = bias.data.data();
    double* Y = out.data.data();

    const std::size_t w_per_out = k.count * cin;
    std::size_t yi = 0;
    for (std::size_t b = 0; b < g.batch; ++b) {
        const std::size_t in_base_b = b * g.in_sample_stride;
        std::vector<std::size_t> o(g.out_spatial.size(), 0);
        if (g.out_positions == 0) continue;
        do {
            const long long origin = detail::window_origin(s, g, o);
            for (std::size_t co = 0; co < cout; ++co) {
                double acc = B[co];
                const double* w_co = W + co * w_per_out;
                for (std::size_t kk = 0; kk < k.count; ++kk) {
                    if (g.padded && !detail::window_tap_in_bounds(s, g, o, k.coords[kk])) continue;
                    const double* x = X + in_base_b + static_cast<std::size_t>(origin + k.delta[kk]);
                    const double* w = w_co + kk * cin;
                    for (std::size_t ci = 0; ci < cin; ++ci) acc += x[ci] * w[ci];
                }
                Y[yi++] = acc;
            }
        } while (advance_index(o, g.out_spatial));
    }
    return out;
}

struct ConvGrads {
    Tensor dweight;
    Tensor dbias;
    Tensor dinput;
};

inline ConvGrads conv_backward(const LayerSpec& s, const Tensor& weight, const Tensor& in,
                               const Tensor& dout) {
    const auto g = detail::window_geometry(s, in.shape);
    const auto k = detail::make_kernel_offsets(s.kernel, g.in_strides_spatial);
    const std::size_t cin = g.channels_in;
    const std::size_t cout = s.out_channels;

    ConvGrads grads;
    grads.dweight = Tensor::zeros(weight.shape);
    grads.dbias = Tensor::zeros({cout});
    grads.dinput = Tensor::zeros(in.shape);

    const double* X = in.data.data();
    const double* W = weight.data.data();
    const double* G = dout.data.data();
    double* dW = grads.dweight.data.data();
    double* dB = grads.dbias.data.data();
    double* dX = grads.dinput.data.data();

    const std::size_t w_per_out = k.count * cin;
    std::size_t gi = 0;
    for (std::size_t b = 0; b < g.batch; ++b) {
        const std::size_t in_base_b = b * g.in_sample_stride;
        std::vector<std::size_t> o(g.out_spatial.size(), 0);
        if (g.out_positions == 0) continue;
        do {
            const long long origin = detail::window_origin(s, g, o);
            for (std::size_t co = 0; co < cout; ++co) {
                const double go = G[gi++];
                dB[co] += go;
                const double* w_co = W + co * w_per_out;
                double* dw_co = dW + co * w_per_out;
                for (std::size_t kk = 0; kk < k.count; ++kk) {
                    if (g.padded && !detail::window_tap_in_bounds(s, g, o, k.coords[kk])) continue;
                    const std::size_t base = in_base_b + static_cast<std::size_t>(origin + k.delta[kk]);
                    const double* x = X + base;
                    double* dx = dX + base;
                    const double* w = w_co + kk * cin;
                    double* dw = dw_co + kk * cin;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        dw[ci] += go * x[ci];
                        dx[ci] += go * w[ci];
                    }
                }
            }
        } while (advance_index(o, g.out_spatial));
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Average pooling
// ---------------------------------------------------------------------------

inline Tensor avg_pool_forward(const LayerSpec& s, const Tensor& in) {
    const auto g = detail::window_geometry(s, in.shape);
    const auto k = detail::make_kernel_offsets(s.kernel, g.in_strides_spatial);
    const std::size_t c = g.channels_in;
    const double inv_count = 1.0 / static_cast<double>(k.count);

    Shape out_shape{g.batch};
    out_shape.insert(out_shape.end(), g.out_spatial.begin(), g.out_spatial.end());
    out_shape.push_back(c);
    Tensor out = Tensor::zeros(out_shape);

    const double* X = in.data.data();
    double* Y = out.data.data();
    std::vector<double> acc(c);

    std::size_t yi = 0;
    for (std::size_t b = 0; b < g.batch; ++b) {
        const std::size_t in_base_b = b * g.in_sample_stride;
        std::vector<std::size_t> o(g.out_spatial.size(), 0);
        if (g.out_positions == 0) continue;
        do {
            std::fill(acc.begin(), acc.end(), 0.0);
            const long long origin = detail::window_origin(s, g, o);
            for (std::size_t kk = 0; kk < k.count; ++kk) {
                if (g.padded && !detail::window_tap_in_bounds(s, g, o, k.coords[kk])) continue;
                const double* x = X + in_base_b + static_cast<std::size_t>(origin + k.delta[kk]);
                for (std::size_t ci = 0; ci < c; ++ci) acc[ci] += x[ci];
            }
            for (std::size_t ci = 0; ci < c; ++ci) Y[yi++] = acc[ci] * inv_count;
        } while (advance_index(o, g.out_spatial));
    }
    return out;
}

inline Tensor avg_pool_backward(const LayerSpec& s, const Shape& in_shape, const Tensor& dout) {
    const auto g = detail::window_geometry(s, in_shape);
    const auto k = detail::make_kernel_offsets(s.kernel, g.in_strides_spatial);
    const std::size_t c = g.channels_in;
    const double inv_count = 1.0 / static_cast<double>(k.count);

    Tensor din = Tensor::zeros(in_shape);
    const double* G = dout.data.data();
    double* dX = din.data.data();

    std::size_t gi = 0;
    for (std::size_t b = 0; b < g.batch; ++b) {
        const std::size_t in_base_b = b * g.in_sample_stride;
        std::vector<std::size_t> o(g.out_spatial.size(), 0);
        if (g.out_positions == 0) continue;
        do {
            const long long origin = detail::window_origin(s, g, o);
            const double* go = G + gi;
            gi += c;
            for (std::size_t kk = 0; kk < k.count; ++kk) {
                if (g.padded && !detail::window_tap_in_bounds(s, g, o, k.coords[kk])) continue;
                double* dx = dX + in_base_b + static_cast<std::size_t>(origin + k.delta[kk]);
                for (std::size_t ci = 0; ci < c; ++ci) dx[ci] += go[ci] * inv_count;
            }
        } while (advance_index(o, g.out_spatial));
    }
    return din;
}

// ---------------------------------------------------------------------------
// Batch normalization (per-channel over batch and spatial axes)
// ---------------------------------------------------------------------------

struct BatchNormCache {
    Tensor mean;     // [C]
    Tensor inv_std;  // [C]
};

inline Tensor batch_norm_forward_train(const Tensor& in, const Tensor& gamma, const Tensor& beta,
                                       Tensor& running_mean, Tensor& running_var,
                                       BatchNormCache& cache) {
    const std::size_t c = in.shape.back();
    const std::size_t total = in.numel();
    const std::size_t n = total / c;

    cache.mean = Tensor::zeros({c});
    Tensor var = Tensor::zeros({c});
    cache.inv_std = Tensor::zeros({c});

    const double* X = in.data.data();
    double* mu = cache.mean.data.data();
    for (std::size_t i = 0; i < total; ++i) mu[i % c] += X[i];
    for (std::size_t ci = 0; ci < c; ++ci) mu[ci] /= static_cast<double>(n);

    double* v = var.data.data();
    for (std::size_t i = 0; i < total; ++i) {
        const double d = X[i] - mu[i % c];
        v[i % c] += d * d;
    }
    for (std::size_t ci = 0; ci < c; ++ci) v[ci] /= static_cast<double>(n);

    double* is = cache.inv_std.data.data();
    for (std::size_t ci = 0; ci < c; ++ci) is[ci] = 1.0 / std::sqrt(v[ci] + kBnEps);

    for (std::size_t ci = 0; ci < c; ++ci) {
        running_mean.data[ci] = (1.0 - kBnMomentum) * running_mean.data[ci] + kBnMomentum * mu[ci];
        running_var.data[ci] = (1.0 - kBnMomentum) * running_var.data[ci] + kBnMomentum * v[ci];
    }

    Tensor out = Tensor::zeros(in.shape);
    double* Y = out.data.data();
    const double* G = gamma.data.data();
    const double* B = beta.data.data();
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t ci = i % c;
        Y[i] = G[ci] * (X[i] - mu[ci]) * is[ci] + B[ci];
    }
    return out;
}

inline Tensor batch_norm_forward_eval(const Tensor& in, const Tensor& gamma, const Tensor& beta,
                                      const Tensor& running_mean, const Tensor& running_var) {
    const std::size_t c = in.shape.back();
    const std::size_t total = in.numel();
    Tensor out = Tensor::zeros(in.shape);
    std::vector<double> scale(c), shift(c);
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double is = 1.0 / std::sqrt(running_var.data[ci] + kBnEps);
        scale[ci] = gamma.data[ci] * is;
        shift[ci] = beta.data[ci] - running_mean.data[ci] * scale[ci];
    }
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t ci = i % c;
        out.data[i] = in.data[i] * scale[ci] + shift[ci];
    }
    return out;
}

struct BatchNormGrads {
    Tensor dgamma;
    Tensor dbeta;
    Tensor dinput;
};

inline BatchNormGrads batch_norm_backward(const Tensor& in, const Tensor& gamma,
                                          const BatchNormCache& cache, const Tensor& dout) {
    const std::size_t c = in.shape.back();
    const std::size_t total = in.numel();
    const double n = static_cast<double>(total / c);

    BatchNormGrads grads;
    grads.dgamma = Tensor::zeros({c});
    grads.dbeta = Tensor::zeros({c});
    grads.dinput = Tensor::zeros(in.shape);

    const double* X = in.data.data();
    const double* G = dout.data.data();
    const double* mu = cache.mean.data.data();
    const double* is = cache.inv_std.data.data();
    double* dg = grads.dgamma.data.data();
    double* db = grads.dbeta.data.data();

    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t ci = i % c;
        const double xhat = (X[i] - mu[ci]) * is[ci];
        dg[ci] += G[i] * xhat;
        db[ci] += G[i];
    }

    double* dX = grads.dinput.data.data();
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t ci = i % c;
        const double xhat = (X[i] - mu[ci]) * is[ci];
        dX[i] = gamma.data[ci] * is[ci] * (G[i] - db[ci] / n - xhat * dg[ci] / n);
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Elementwise activations, flatten, fully connected
// ---------------------------------------------------------------------------

inline Tensor relu_forward(const Tensor& in) {
    Tensor out = in;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

inline Tensor relu_backward(const Tensor& in, const Tensor& dout) {
    Tensor din = dout;
    for (std::size_t i = 0; i < din.numel(); ++i)
        if (!(in.data[i] > 0.0)) din.data[i] = 0.0;
    return din;
}

inline Tensor tanh_forward(const Tensor& in) {
    Tensor out = in;
    for (double& v : out.data) v = std::tanh(v);
    return out;
}

inline Tensor tanh_backward(const Tensor& out, const Tensor& dout) {
    Tensor din = dout;
    for (std::size_t i = 0; i < din.numel(); ++i) din.data[i] *= 1.0 - out.data[i] * out.data[i];
    return din;
}

inline Tensor flatten_forward(const Tensor& in) {
    Tensor out = in;
    const std::size_t batch = in.shape[0];
    out.shape = {batch, in.numel() / batch};
    return out;
}

inline Tensor flatten_backward(const Shape& in_shape, const Tensor& dout) {
    Tensor din = dout;
    din.shape = in_shape;
    return din;
}

inline Tensor fc_forward(const LayerSpec& s, const Tensor& weight, const Tensor& bias,
                         const Tensor& in) {
    const std::size_t batch = in.shape[0];
    const std::size_t fin = s.in_features;
    const std::size_t fout = s.out_features;
    Tensor out = Tensor::zeros({batch, fout});
    const double* X = in.data.data();
    const double* W = weight.data.data();
    const double* B = bias.data.data();
    double* Y = out.data.data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = X + b * fin;
        double* y = Y + b * fout;
        for (std::size_t j = 0; j < fout; ++j) {
            const double* w = W + j * fin;
            double acc = B[j];
            for (std::size_t i = 0; i < fin; ++i) acc += x[i] * w[i];
            y[j] = acc;
        }
    }
    return out;
}

struct FcGrads {
    Tensor dweight;
    Tensor dbias;
    Tensor dinput;
};

inline FcGrads fc_backward(const LayerSpec& s, const Tensor& weight, const Tensor& in,
                           const Tensor& dout) {
    const std::size_t batch = in.shape[0];
    const std::size_t fin = s.in_features;
    const std::size_t fout = s.out_features;
    FcGrads grads;
    grads.dweight = Tensor::zeros(weight.shape);
    grads.dbias = Tensor::zeros({fout});
    grads.dinput = Tensor::zeros(in.shape);
    const double* X = in.data.data();
    const double* W = weight.data.data();
    const double* G = dout.data.data();
    double* dW = grads.dweight.data.data();
    double* dB = grads.dbias.data.data();
    double* dX = grads.dinput.data.data();
    for (std::size_t b = 0; b < batch; ++b) {
        const double* x = X + b * fin;
        const double* g = G + b * fout;
        double* dx = dX + b * fin;
        for (std::size_t j = 0; j < fout; ++j) {
            const double gj = g[j];
            dB[j] += gj;
            const double* w = W + j * fin;
            double* dw = dW + j * fin;
            for (std::size_t i = 0; i < fin; ++i) {
                dw[i] += gj * x[i];
                dx[i] += gj * w[i];
            }
        }
    }
    return grads;
}

}  // namespace mrmf
