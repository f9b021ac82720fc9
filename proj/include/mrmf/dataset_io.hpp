#pragma once

#include <cstdint>
#include <string>

#include "mrmf/binio.hpp"
#include "mrmf/dataset.hpp"
#include "mrmf/errors.hpp"

namespace mrmf {

// Dataset container layout, all fields packed:
//   magic "MRD1" | u32 N | u8 D | D x u32 spatial extents | u32 C | u32 m
//   | N sample payloads (row-major spatial, channel fastest, f32 LE)
//   | N label vectors (f32 LE)
// Values are stored at 32-bit precision and promoted to f64 on read.

inline constexpr char kDatasetMagic[5] = "MRD1";

inline void write_dataset(const Dataset& d, const std::string& path) {
    validate_dataset(d);
    const Shape& shape = d.sample_shape();
    const std::size_t spatial = shape.size() - 1;

    auto out = binio::open_output(path);
    binio::write_bytes(out, kDatasetMagic, 4);
    binio::write_u32(out, static_cast<std::uint32_t>(d.size()));
    binio::write_u8(out, static_cast<std::uint8_t>(spatial));
    for (std::size_t dd = 0; dd < spatial; ++dd)
        binio::write_u32(out, static_cast<std::uint32_t>(shape[dd]));
    binio::write_u32(out, static_cast<std::uint32_t>(shape.back()));
    binio::write_u32(out, static_cast<std::uint32_t>(d.label_length()));
    for (const Tensor& s : d.samples)
        for (double v : s.data) binio::write_f32(out, static_cast<float>(v));
    for (const auto& label : d.labels)
        for (double v : label) binio::write_f32(out, static_cast<float>(v));
    out.flush();
    if (!out) throw DataError(DataErrorKind::io, "write failed: " + path);
}

inline Dataset read_dataset(const std::string& path) {
    auto in = binio::open_input(path);
    binio::expect_magic(in, kDatasetMagic, "dataset");

    const std::uint32_t n = binio::read_u32(in, "sample count");
    const std::uint8_t spatial = binio::read_u8(in, "spatial rank");
    if (n < 1) throw DataError(DataErrorKind::bad_header, "dataset has zero samples");
    if (spatial < 1 || spatial > 3)
        throw DataError(DataErrorKind::bad_header,
                        "spatial rank must be 1..3, got " + std::to_string(spatial));

    Shape shape(spatial + 1);
    for (std::size_t d = 0; d < spatial; ++d) {
        shape[d] = binio::read_u32(in, "spatial extent");
        if (shape[d] == 0) throw DataError(DataErrorKind::bad_header, "zero spatial extent");
    }
    shape[spatial] = binio::read_u32(in, "channel count");
    if (shape[spatial] == 0) throw DataError(DataErrorKind::bad_header, "zero channel count");
    const std::uint32_t m = binio::read_u32(in, "label length");
    if (m == 0) throw DataError(DataErrorKind::bad_header, "zero label length");

    // Guard the total element count before allocating anything.
    constexpr std::uint64_t kMaxElements = 1ull << 40;
    std::uint64_t per_sample = 1;
    for (std::size_t e : shape) {
        per_sample *= static_cast<std::uint64_t>(e);
        if (per_sample > kMaxElements)
            throw DataError(DataErrorKind::extent_overflow,
                            "sample extents overflow the element budget");
    }
    if (per_sample * n > kMaxElements || static_cast<std::uint64_t>(m) * n > kMaxElements)
        throw DataError(DataErrorKind::extent_overflow, "total payload overflows the element budget");

    Dataset d;
    d.resolution_tag = ResolutionFactors::identity(spatial);
    d.samples.reserve(n);
    d.labels.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.data) v = static_cast<double>(binio::read_f32(in, "sample payload"));
        d.samples.push_back(std::move(t));
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        std::vector<double> label(m);
        for (double& v : label) v = static_cast<double>(binio::read_f32(in, "label payload"));
        d.labels.push_back(std::move(label));
    }
    binio::expect_eof(in, "dataset");
    return d;
}

}  // namespace mrmf
