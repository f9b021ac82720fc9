#pragma once

#include <cstdint>
#include <string>

#include "mrmf/binio.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/model.hpp"

namespace mrmf {

// Checkpoint layout, all fields packed:
//   magic "MRC1" | u32 version | u8 input rank | rank x u32 extents
//   | u32 layer count | per layer: u8 kind id, kind-specific hyperparams,
//     parameter tensors, state tensors
// Tensors are stored as u8 rank, rank x u32 extents, numel x f64 LE, so the
// round-trip is bitwise lossless.

inline constexpr char kCheckpointMagic[5] = "MRC1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_size_vec(std::ostream& out, const std::vector<std::size_t>& v) {
    binio::write_u8(out, static_cast<std::uint8_t>(v.size()));
    for (std::size_t e : v) binio::write_u32(out, static_cast<std::uint32_t>(e));
}

inline std::vector<std::size_t> read_size_vec(std::istream& in, const char* what) {
    const std::uint8_t n = binio::read_u8(in, what);
    std::vector<std::size_t> v(n);
    for (auto& e : v) e = binio::read_u32(in, what);
    return v;
}

inline void write_tensor(std::ostream& out, const Tensor& t) {
    write_size_vec(out, t.shape);
    for (double v : t.data) binio::write_f64(out, v);
}

inline Tensor read_tensor(std::istream& in, const char* what) {
    Shape shape = read_size_vec(in, what);
    for (std::size_t e : shape)
        if (e == 0) throw DataError(DataErrorKind::bad_header, "checkpoint tensor has zero extent");
    constexpr std::uint64_t kMaxElements = 1ull << 32;
    std::uint64_t numel = 1;
    for (std::size_t e : shape) {
        numel *= e;
        if (numel > kMaxElements)
            throw DataError(DataErrorKind::extent_overflow, "checkpoint tensor extents overflow");
    }
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data) v = binio::read_f64(in, what);
    return t;
}

inline void write_layer_spec(std::ostream& out, const LayerSpec& s) {
    binio::write_u8(out, static_cast<std::uint8_t>(s.kind));
    switch (s.kind) {
        case LayerKind::conv:
            write_size_vec(out, s.kernel);
            write_size_vec(out, s.stride);
            write_size_vec(out, s.pad);
            binio::write_u32(out, static_cast<std::uint32_t>(s.in_channels));
            binio::write_u32(out, static_cast<std::uint32_t>(s.out_channels));
            break;
        case LayerKind::avg_pool:
            write_size_vec(out, s.kernel);
            write_size_vec(out, s.stride);
            write_size_vec(out, s.pad);
            break;
        case LayerKind::batch_norm:
            binio::write_u32(out, static_cast<std::uint32_t>(s.features));
            break;
        case LayerKind::fully_connected:
            binio::write_u32(out, static_cast<std::uint32_t>(s.in_features));
            binio::write_u32(out, static_cast<std::uint32_t>(s.out_features));
            break;
        default:
            break;
    }
}

inline LayerSpec read_layer_spec(std::istream& in) {
    const std::uint8_t kind_id = binio::read_u8(in, "layer kind");
    if (kind_id > static_cast<std::uint8_t>(LayerKind::fully_connected))
        throw DataError(DataErrorKind::bad_header,
                        "unknown layer kind id " + std::to_string(kind_id));
    LayerSpec s;
    s.kind = static_cast<LayerKind>(kind_id);
    switch (s.kind) {
        case LayerKind::conv:
            s.kernel = read_size_vec(in, "conv kernel");
            s.stride = read_size_vec(in, "conv stride");
            s.pad = read_size_vec(in, "conv pad");
            s.in_channels = binio::read_u32(in, "conv channels");
            s.out_channels = binio::read_u32(in, "conv channels");
            break;
        case LayerKind::avg_pool:
            s.kernel = read_size_vec(in, "pool kernel");
            s.stride = read_size_vec(in, "pool stride");
            s.pad = read_size_vec(in, "pool pad");
            break;
        case LayerKind::batch_norm:
            s.features = binio::read_u32(in, "batchnorm features");
            break;
        case LayerKind::fully_connected:
            s.in_features = binio::read_u32(in, "fc features");
            s.out_features = binio::read_u32(in, "fc features");
            break;
        default:
            break;
    }
    return s;
}

}  // namespace detail

inline void save_checkpoint(const Model& m, const std::string& path) {
    auto out = binio::open_output(path);
    binio::write_bytes(out, kCheckpointMagic, 4);
    binio::write_u32(out, kCheckpointVersion);
    detail::write_size_vec(out, m.input_shape);
    binio::write_u32(out, static_cast<std::uint32_t>(m.layers.size()));
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        detail::write_layer_spec(out, m.layers[i]);
        for (const Tensor& t : m.params[i].tensors) detail::write_tensor(out, t);
        for (const Tensor& t : m.state[i].tensors) detail::write_tensor(out, t);
    }
    out.flush();
    if (!out) throw DataError(DataErrorKind::io, "write failed: " + path);
}

inline Model load_checkpoint(const std::string& path) {
    auto in = binio::open_input(path);
    binio::expect_magic(in, kCheckpointMagic, "checkpoint");
    const std::uint32_t version = binio::read_u32(in, "version");
    if (version != kCheckpointVersion)
        throw DataError(DataErrorKind::bad_version,
                        "unsupported checkpoint version " + std::to_string(version));

    Shape input_shape = detail::read_size_vec(in, "input shape");
    const std::uint32_t layer_count = binio::read_u32(in, "layer count");
    std::vector<LayerSpec> specs;
    specs.reserve(layer_count);

    // Specs and tensors are interleaved in the file, so collect the tensors
    // and rebuild the model once the full architecture is known.
    std::vector<std::vector<Tensor>> params(layer_count);
    std::vector<std::vector<Tensor>> state(layer_count);
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        LayerSpec s = detail::read_layer_spec(in);
        std::size_t n_params = 0;
        std::size_t n_state = 0;
        switch (s.kind) {
            case LayerKind::conv:
            case LayerKind::fully_connected:
                n_params = 2;
                break;
            case LayerKind::batch_norm:
                n_params = 2;
                n_state = 2;
                break;
            default:
                break;
        }
        for (std::size_t j = 0; j < n_params; ++j)
            params[i].push_back(detail::read_tensor(in, "parameter tensor"));
        for (std::size_t j = 0; j < n_state; ++j)
            state[i].push_back(detail::read_tensor(in, "state tensor"));
        specs.push_back(std::move(s));
    }
    binio::expect_eof(in, "checkpoint");

    Model m;
    try {
        m = make_model(std::move(input_shape), std::move(specs));
    } catch (const ShapeError& e) {
        throw DataError(DataErrorKind::bad_header,
                        std::string("checkpoint architecture is inconsistent: ") + e.what());
    }
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        if (params[i].size() != m.params[i].tensors.size() ||
            state[i].size() != m.state[i].tensors.size())
            throw DataError(DataErrorKind::invalid,
                            "checkpoint tensor count mismatch at layer " + std::to_string(i));
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            if (params[i][j].shape != m.params[i].tensors[j].shape)
                throw DataError(DataErrorKind::invalid,
                                "checkpoint parameter shape mismatch at layer " + std::to_string(i));
            m.params[i].tensors[j] = std::move(params[i][j]);
        }
        for (std::size_t j = 0; j < state[i].size(); ++j) {
            if (state[i][j].shape != m.state[i].tensors[j].shape)
                throw DataError(DataErrorKind::invalid,
                                "checkpoint state shape mismatch at layer " + std::to_string(i));
            m.state[i].tensors[j] = std::move(state[i][j]);
        }
    }
    return m;
}

}  // namespace mrmf
