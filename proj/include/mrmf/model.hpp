#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mrmf/errors.hpp"
#include "mrmf/layers.hpp"
#include "mrmf/rng.hpp"
#include "mrmf/tensor.hpp"

namespace mrmf {

// Learnable tensors of one layer: {weight, bias} for conv and fully connected,
// {gamma, beta} for batch norm, empty otherwise.
struct LayerParams {
    std::vector<Tensor> tensors;
};

// Non-learnable per-layer state: {running_mean, running_var} for batch norm.
struct LayerState {
    std::vector<Tensor> tensors;
};

struct Model {
    Shape input_shape;  // sample shape, no batch axis
    Shape output_shape;
    std::vector<LayerSpec> layers;
    std::vector<LayerParams> params;
    std::vector<LayerState> state;

    // Bumped on every parameter mutation so cached activations can be
    // recognized as stale.
    std::uint64_t version = 0;

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& p : params)
            for (const auto& t : p.tensors) n += t.numel();
        return n;
    }
};

// Builds a model over the given sample shape, inferring unspecified channel
// and feature counts from the propagated shapes. Throws ShapeError when a
// layer cannot accept its incoming shape.
inline Model make_model(Shape input_shape, std::vector<LayerSpec> specs) {
    if (input_shape.empty()) throw ShapeError("model input shape must not be empty");
    for (std::size_t e : input_shape)
        if (e == 0) throw ShapeError("model input shape has a zero extent");

    Model m;
    m.input_shape = std::move(input_shape);
    m.layers = std::move(specs);

    Shape cur = m.input_shape;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        LayerSpec& s = m.layers[i];
        try {
            validate_layer_spec(s);
            switch (s.kind) {
                case LayerKind::conv:
                    if (s.in_channels == 0) s.in_channels = cur.back();
                    break;
                case LayerKind::batch_norm:
                    if (s.features == 0) {
                        if (cur.size() < 2) throw ShapeError("batchnorm layer: expects spatial input");
                        s.features = cur.back();
                    }
                    break;
                case LayerKind::fully_connected:
                    if (s.in_features == 0) {
                        if (cur.size() != 1) throw ShapeError("fc layer: expects flattened input");
                        s.in_features = cur[0];
                    }
                    break;
                default:
                    break;
            }
            cur = layer_output_shape(s, cur);
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
        }

        LayerParams p;
        LayerState st;
        switch (s.kind) {
            case LayerKind::conv:
                p.tensors.push_back(Tensor::zeros(conv_weight_shape(s)));
                p.tensors.push_back(Tensor::zeros({s.out_channels}));
                break;
            case LayerKind::fully_connected:
                p.tensors.push_back(Tensor::zeros({s.out_features, s.in_features}));
                p.tensors.push_back(Tensor::zeros({s.out_features}));
                break;
            case LayerKind::batch_norm: {
                p.tensors.push_back(Tensor::zeros({s.features}));
                p.tensors.push_back(Tensor::zeros({s.features}));
                Tensor rm = Tensor::zeros({s.features});
                Tensor rv = Tensor::zeros({s.features});
                std::fill(rv.data.begin(), rv.data.end(), 1.0);
                st.tensors.push_back(std::move(rm));
                st.tensors.push_back(std::move(rv));
                break;
            }
            default:
                break;
        }
        m.params.push_back(std::move(p));
        m.state.push_back(std::move(st));
    }
    m.output_shape = cur;
    return m;
}

// Uniform init over +-sqrt(1/fan_in), drawn in a fixed order: layers
// ascending, weight before bias, flat element order. Batch norm starts at
// gamma=1, beta=0 and consumes no random draws.
inline void init_params(Model& m, Rng& rng) {
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& s = m.layers[i];
        switch (s.kind) {
            case LayerKind::conv: {
                std::size_t fan_in = s.in_channels;
                for (std::size_t k : s.kernel) fan_in *= k;
                const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
                for (double& v : m.params[i].tensors[0].data) v = rng.uniform(-bound, bound);
                for (double& v : m.params[i].tensors[1].data) v = rng.uniform(-bound, bound);
                break;
            }
            case LayerKind::fully_connected: {
                const double bound = std::sqrt(1.0 / static_cast<double>(s.in_features));
                for (double& v : m.params[i].tensors[0].data) v = rng.uniform(-bound, bound);
                for (double& v : m.params[i].tensors[1].data) v = rng.uniform(-bound, bound);
                break;
            }
            case LayerKind::batch_norm:
                std::fill(m.params[i].tensors[0].data.begin(), m.params[i].tensors[0].data.end(), 1.0);
                std::fill(m.params[i].tensors[1].data.begin(), m.params[i].tensors[1].data.end(), 0.0);
                std::fill(m.state[i].tensors[0].data.begin(), m.state[i].tensors[0].data.end(), 0.0);
                std::fill(m.state[i].tensors[1].data.begin(), m.state[i].tensors[1].data.end(), 1.0);
                break;
            default:
                break;
        }
    }
    ++m.version;
}

// Activations recorded by a forward pass; required for backward. acts[0] is
// the input batch, acts[i+1] the output of layer i.
struct ForwardCache {
    std::uint64_t model_version = 0;
    bool training = false;
    std::vector<Tensor> acts;
    std::vector<BatchNormCache> bn;
};

inline Tensor model_forward(Model& m, const Tensor& batch, bool training,
                            ForwardCache* cache = nullptr) {
    if (batch.shape.empty() || batch.shape[0] == 0)
        throw ShapeError("forward: batch must have a leading batch axis");
    if (Shape(batch.shape.begin() + 1, batch.shape.end()) != m.input_shape)
        throw ShapeError("forward: batch sample shape " +
                         shape_to_string(Shape(batch.shape.begin() + 1, batch.shape.end())) +
                         " does not match model input " + shape_to_string(m.input_shape));

    if (cache) {
        cache->model_version = m.version;
        cache->training = training;
        cache->acts.clear();
        cache->bn.assign(m.layers.size(), BatchNormCache{});
        cache->acts.push_back(batch);
    }

    Tensor cur = batch;
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        const LayerSpec& s = m.layers[i];
        Tensor next;
        switch (s.kind) {
            case LayerKind::conv:
                next = conv_forward(s, m.params[i].tensors[0], m.params[i].tensors[1], cur);
                break;
            case LayerKind::avg_pool:
                next = avg_pool_forward(s, cur);
                break;
            case LayerKind::batch_norm: {
                BatchNormCache bnc;
                if (training)
                    next = batch_norm_forward_train(cur, m.params[i].tensors[0],
                                                    m.params[i].tensors[1], m.state[i].tensors[0],
                                                    m.state[i].tensors[1], bnc);
                else
                    next = batch_norm_forward_eval(cur, m.params[i].tensors[0],
                                                   m.params[i].tensors[1], m.state[i].tensors[0],
                                                   m.state[i].tensors[1]);
                if (cache) cache->bn[i] = std::move(bnc);
                break;
            }
            case LayerKind::relu:
                next = relu_forward(cur);
                break;
            case LayerKind::tanh:
                next = tanh_forward(cur);
                break;
            case LayerKind::flatten:
                next = flatten_forward(cur);
                break;
            case LayerKind::fully_connected:
                next = fc_forward(s, m.params[i].tensors[0], m.params[i].tensors[1], cur);
                break;
        }
        cur = std::move(next);
        if (cache) cache->acts.push_back(cur);
    }
    return cur;
}

// Eval-mode forward; never mutates parameters or running statistics, so a
// const model is fine.
inline Tensor model_forward(const Model& m, const Tensor& batch) {
    return model_forward(const_cast<Model&>(m), batch, /*training=*/false);
}

struct ModelGrads {
    std::vector<LayerParams> params;  // same layout as Model::params
    Tensor dinput;

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& p : params)
            for (const auto& t : p.tensors) n += t.numel();
        return n;
    }
};

inline ModelGrads zero_grads_like(const Model& m) {
    ModelGrads g;
    g.params.resize(m.params.size());
    for (std::size_t i = 0; i < m.params.size(); ++i)
        for (const auto& t : m.params[i].tensors)
            g.params[i].tensors.push_back(Tensor::zeros(t.shape));
    return g;
}

inline ModelGrads model_backward(const Model& m, const ForwardCache& cache, const Tensor& dout) {
    if (cache.model_version != m.version)
        throw TrainError("backward: forward cache is stale, parameters changed since the pass");
    if (!cache.training)
        throw TrainError("backward: requires a cache from a training-mode forward pass");
    if (cache.acts.size() != m.layers.size() + 1)
        throw TrainError("backward: cache does not cover all layers");

    ModelGrads g;
    g.params.resize(m.layers.size());
    Tensor cur = dout;
    for (std::size_t i = m.layers.size(); i-- > 0;) {
        const LayerSpec& s = m.layers[i];
        const Tensor& in = cache.acts[i];
        switch (s.kind) {
            case LayerKind::conv: {
                ConvGrads cg = conv_backward(s, m.params[i].tensors[0], in, cur);
                g.params[i].tensors = {std::move(cg.dweight), std::move(cg.dbias)};
                cur = std::move(cg.dinput);
                break;
            }
            case LayerKind::avg_pool:
                cur = avg_pool_backward(s, in.shape, cur);
                break;
            case LayerKind::batch_norm: {
                BatchNormGrads bg = batch_norm_backward(in, m.params[i].tensors[0], cache.bn[i], cur);
                g.params[i].tensors = {std::move(bg.dgamma), std::move(bg.dbeta)};
                cur = std::move(bg.dinput);
                break;
            }
            case LayerKind::relu:
                cur = relu_backward(in, cur);
                break;
            case LayerKind::tanh:
                cur = tanh_backward(cache.acts[i + 1], cur);
                break;
            case LayerKind::flatten:
                cur = flatten_backward(in.shape, cur);
                break;
            case LayerKind::fully_connected: {
                FcGrads fg = fc_backward(s, m.params[i].tensors[0], in, cur);
                g.params[i].tensors = {std::move(fg.dweight), std::move(fg.dbias)};
                cur = std::move(fg.dinput);
                break;
            }
        }
    }
    g.dinput = std::move(cur);
    return g;
}

inline bool models_bitwise_equal(const Model& a, const Model& b) {
    if (a.input_shape != b.input_shape || a.layers != b.layers) return false;
    if (a.params.size() != b.params.size() || a.state.size() != b.state.size()) return false;
    for (std::size_t i = 0; i < a.params.size(); ++i) {
        if (a.params[i].tensors.size() != b.params[i].tensors.size()) return false;
        for (std::size_t j = 0; j < a.params[i].tensors.size(); ++j)
            if (!bitwise_equal(a.params[i].tensors[j], b.params[i].tensors[j])) return false;
    }
    for (std::size_t i = 0; i < a.state.size(); ++i) {
        if (a.state[i].tensors.size() != b.state[i].tensors.size()) return false;
        for (std::size_t j = 0; j < a.state[i].tensors.size(); ++j)
            if (!bitwise_equal(a.state[i].tensors[j], b.state[i].tensors[j])) return false;
    }
    return true;
}

}  // namespace mrmf
