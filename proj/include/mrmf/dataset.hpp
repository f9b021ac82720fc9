#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mrmf/errors.hpp"
#include "mrmf/rng.hpp"
#include "mrmf/tensor.hpp"

namespace mrmf {

// Per-spatial-axis integer reduction factors. The channel axis is never
// reduced and carries no factor entry.
struct ResolutionFactors {
    std::vector<std::size_t> k;

    static ResolutionFactors identity(std::size_t spatial_axes) {
        return ResolutionFactors{std::vector<std::size_t>(spatial_axes, 1)};
    }

    std::size_t product() const {
        std::size_t p = 1;
        for (std::size_t f : k) p *= f;
        return p;
    }

    bool is_identity() const {
        for (std::size_t f : k)
            if (f != 1) return false;
        return true;
    }

    bool operator==(const ResolutionFactors&) const = default;
};

inline std::string factors_to_string(const ResolutionFactors& f) {
    std::string s;
    for (std::size_t i = 0; i < f.k.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(f.k[i]);
    }
    return s;
}

inline void validate_factors(const ResolutionFactors& f, const Shape& sample_shape) {
    if (sample_shape.size() < 2)
        throw ShapeError("factors: sample shape must be spatial axes + channel, got " +
                         shape_to_string(sample_shape));
    const std::size_t spatial = sample_shape.size() - 1;
    if (f.k.size() != spatial)
        throw DataError(DataErrorKind::invalid,
                        "factors: " + std::to_string(f.k.size()) + " factors for " +
                            std::to_string(spatial) + " spatial axes");
    for (std::size_t d = 0; d < spatial; ++d) {
        if (f.k[d] < 1)
            throw DataError(DataErrorKind::invalid, "factors: axis " + std::to_string(d) +
                                                        " factor must be >= 1");
        if (sample_shape[d] % f.k[d] != 0)
            throw DataError(DataErrorKind::not_divisible,
                            "axis " + std::to_string(d) + " extent " +
                                std::to_string(sample_shape[d]) + " is not divisible by factor " +
                                std::to_string(f.k[d]));
    }
}

struct Dataset {
    std::vector<Tensor> samples;
    std::vector<std::vector<double>> labels;
    // Per-axis reduction applied so far relative to the originally generated
    // resolution; all ones for original data.
    ResolutionFactors resolution_tag;

    std::size_t size() const { return samples.size(); }
    const Shape& sample_shape() const { return samples.at(0).shape; }
    std::size_t label_length() const { return labels.at(0).size(); }
};

inline void validate_dataset(const Dataset& d) {
    if (d.samples.empty()) throw DataError(DataErrorKind::invalid, "dataset: no samples");
    if (d.labels.size() != d.samples.size())
        throw DataError(DataErrorKind::invalid, "dataset: sample/label count mismatch");
    const Shape& shape = d.samples[0].shape;
    if (shape.size() < 2 || shape.size() > 4)
        throw DataError(DataErrorKind::invalid,
                        "dataset: sample rank must be 1..3 spatial axes + channel");
    const std::size_t m = d.labels[0].size();
    if (m < 1) throw DataError(DataErrorKind::invalid, "dataset: label length must be >= 1");
    for (std::size_t i = 0; i < d.samples.size(); ++i) {
        if (d.samples[i].shape != shape)
            throw DataError(DataErrorKind::invalid,
                            "dataset: sample " + std::to_string(i) + " shape differs");
        if (d.labels[i].size() != m)
            throw DataError(DataErrorKind::invalid,
                            "dataset: label " + std::to_string(i) + " length differs");
    }
    if (d.resolution_tag.k.size() != shape.size() - 1)
        throw DataError(DataErrorKind::invalid, "dataset: resolution tag rank mismatch");
}

// Block-average one sample. Each output element is the mean of its k-block,
// per channel; the summation order inside a block is row-major over the block
// offsets with the channel loop innermost, matching the average-pooling layer
// bit for bit.
inline Tensor downsample(const Tensor& sample, const ResolutionFactors& factors) {
    validate_factors(factors, sample.shape);
    const std::size_t spatial = sample.shape.size() - 1;
    const std::size_t channels = sample.shape.back();

    Shape out_shape(sample.shape);
    for (std::size_t d = 0; d < spatial; ++d) out_shape[d] = sample.shape[d] / factors.k[d];
    Tensor out = Tensor::zeros(out_shape);

    std::vector<std::size_t> in_strides(spatial);
    std::size_t stride = channels;
    for (std::size_t d = spatial; d-- > 0;) {
        in_strides[d] = stride;
        stride *= sample.shape[d];
    }

    Shape out_spatial(out_shape.begin(), out_shape.end() - 1);
    Shape block(factors.k);
    const double inv_count = 1.0 / static_cast<double>(factors.product());

    std::vector<double> acc(channels);
    std::vector<std::size_t> o(spatial, 0);
    std::size_t yi = 0;
    do {
        std::fill(acc.begin(), acc.end(), 0.0);
        std::size_t origin = 0;
        for (std::size_t d = 0; d < spatial; ++d) origin += o[d] * factors.k[d] * in_strides[d];
        std::vector<std::size_t> b(spatial, 0);
        do {
            std::size_t at = origin;
            for (std::size_t d = 0; d < spatial; ++d) at += b[d] * in_strides[d];
            const double* x = sample.data.data() + at;
            for (std::size_t c = 0; c < channels; ++c) acc[c] += x[c];
        } while (advance_index(b, block));
        for (std::size_t c = 0; c < channels; ++c) out.data[yi++] = acc[c] * inv_count;
    } while (advance_index(o, out_spatial));
    return out;
}

inline Dataset downsample_dataset(const Dataset& data, const ResolutionFactors& factors) {
    validate_dataset(data);
    Dataset out;
    out.samples.reserve(data.size());
    for (const Tensor& s : data.samples) out.samples.push_back(downsample(s, factors));
    out.labels = data.labels;
    out.resolution_tag.k.resize(factors.k.size());
    for (std::size_t d = 0; d < factors.k.size(); ++d)
        out.resolution_tag.k[d] = data.resolution_tag.k[d] * factors.k[d];
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic task: sinusoidal parameter inversion
// ---------------------------------------------------------------------------

// Each sample is a per-channel sum of `components` axis-aligned sinusoids on
// the half-offset grid u_d = (i + 0.5) / L_d. Component j runs along axis
// j % D with integer frequency 1 + (j / D) % max_frequency; its amplitude and
// phase are drawn per sample. The label is the leading slice of the
// normalized parameter vector, so a model must invert the generator. Integer
// frequencies below extent/8 keep the sinusoids exactly orthogonal on the
// grid and smooth enough that block averaging preserves them.
struct SyntheticTaskSpec {
    Shape sample_shape;          // spatial extents + channel count
    std::size_t label_length = 0;
    std::size_t components = 1;  // sinusoids per channel
    std::size_t max_frequency = 1;
    double amp_min = 0.5;
    double amp_max = 1.5;
    std::uint64_t seed = 0;
    std::size_t sample_count = 0;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
};

inline void validate_task_spec(const SyntheticTaskSpec& spec) {
    auto fail = [](const std::string& msg) { throw ConfigError("synthetic task: " + msg); };
    if (spec.sample_shape.size() < 2 || spec.sample_shape.size() > 4)
        fail("sample shape must be 1..3 spatial axes + channel");
    for (std::size_t e : spec.sample_shape)
        if (e == 0) fail("sample shape has a zero extent");
    const std::size_t spatial = spec.sample_shape.size() - 1;
    const std::size_t channels = spec.sample_shape.back();
    std::size_t min_extent = spec.sample_shape[0];
    for (std::size_t d = 0; d < spatial; ++d) min_extent = std::min(min_extent, spec.sample_shape[d]);
    if (spec.sample_count < 1) fail("sample_count must be >= 1");
    if (spec.label_length < 1) fail("label_length must be >= 1");
    if (spec.components < 1) fail("components must be >= 1");
    if (spec.max_frequency < 1) fail("max_frequency must be >= 1");
    if (spec.max_frequency * 8 > min_extent)
        fail("max_frequency " + std::to_string(spec.max_frequency) +
             " too high for extent " + std::to_string(min_extent) +
             " (limit: extent/8)");
    if (spec.components > spatial * spec.max_frequency)
        fail("components must be <= spatial_axes * max_frequency so every sinusoid is distinct");
    if (spec.label_length > 3 * channels * spec.components)
        fail("label_length exceeds the generator's parameter count " +
             std::to_string(3 * channels * spec.components));
    if (!(spec.amp_min > 0.0) || !(spec.amp_max > spec.amp_min))
        fail("amplitude range must satisfy 0 < amp_min < amp_max");
    const double total = spec.train_fraction + spec.val_fraction + spec.test_fraction;
    if (spec.train_fraction < 0 || spec.val_fraction < 0 || spec.test_fraction < 0 ||
        std::abs(total - 1.0) > 1e-9)
        fail("split fractions must be non-negative and sum to 1");
}

namespace detail {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

struct SineComponent {
    std::size_t axis = 0;
    std::size_t frequency = 1;
};

inline SineComponent component_basis(const SyntheticTaskSpec& spec, std::size_t j) {
    const std::size_t spatial = spec.sample_shape.size() - 1;
    SineComponent c;
    c.axis = j % spatial;
    c.frequency = 1 + (j / spatial) % spec.max_frequency;
    return c;
}

}  // namespace detail

// Generation parameters of one sample: amplitude/phase per (channel,
// component), drawn channel-major in declaration order.
struct SampleParams {
    std::vector<double> amplitude;  // [channels * components]
    std::vector<double> phase;
};

inline SampleParams draw_sample_params(const SyntheticTaskSpec& spec, std::size_t sample_index) {
    const std::size_t channels = spec.sample_shape.back();
    Rng rng(derive_seed(spec.seed, 0x5A4D504Cull, sample_index));
    SampleParams p;
    p.amplitude.reserve(channels * spec.components);
    p.phase.reserve(channels * spec.components);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t j = 0; j < spec.components; ++j) {
            p.amplitude.push_back(rng.uniform(spec.amp_min, spec.amp_max));
            p.phase.push_back(rng.uniform(0.0, detail::kTwoPi));
        }
    return p;
}

inline Tensor render_sample(const SyntheticTaskSpec& spec, const SampleParams& p) {
    const std::size_t spatial = spec.sample_shape.size() - 1;
    const std::size_t channels = spec.sample_shape.back();
    Shape grid(spec.sample_shape.begin(), spec.sample_shape.end() - 1);
    Tensor out = Tensor::zeros(spec.sample_shape);

    std::vector<detail::SineComponent> basis(spec.components);
    for (std::size_t j = 0; j < spec.components; ++j) basis[j] = detail::component_basis(spec, j);

    std::vector<std::size_t> pos(spatial, 0);
    std::size_t flat = 0;
    do {
        for (std::size_t c = 0; c < channels; ++c) {
            double v = 0.0;
            for (std::size_t j = 0; j < spec.components; ++j) {
                const auto& b = basis[j];
                const double u = (static_cast<double>(pos[b.axis]) + 0.5) /
                                 static_cast<double>(grid[b.axis]);
                const std::size_t pj = c * spec.components + j;
                v += p.amplitude[pj] *
                     std::sin(detail::kTwoPi * static_cast<double>(b.frequency) * u + p.phase[pj]);
            }
            out.data[flat++] = v;
        }
    } while (advance_index(pos, grid));
    return out;
}

// Normalized generator parameters, channel-major: for each (channel,
// component) the triple ((a - amp_min)/(amp_max - amp_min),
// (a sin(phi)/amp_max + 1)/2, (a cos(phi)/amp_max + 1)/2). The quadrature
// terms are linear functionals of the rendered signal, so the regression task
// is well conditioned at every resolution.
inline std::vector<double> normalized_params(const SyntheticTaskSpec& spec, const SampleParams& p) {
    std::vector<double> out;
    out.reserve(3 * p.amplitude.size());
    const double span = spec.amp_max - spec.amp_min;
    for (std::size_t i = 0; i < p.amplitude.size(); ++i) {
        const double a = p.amplitude[i];
        out.push_back((a - spec.amp_min) / span);
        out.push_back((a * std::sin(p.phase[i]) / spec.amp_max + 1.0) / 2.0);
        out.push_back((a * std::cos(p.phase[i]) / spec.amp_max + 1.0) / 2.0);
    }
    return out;
}

inline Dataset generate_synthetic(const SyntheticTaskSpec& spec) {
    validate_task_spec(spec);
    Dataset d;
    d.samples.reserve(spec.sample_count);
    d.labels.reserve(spec.sample_count);
    d.resolution_tag = ResolutionFactors::identity(spec.sample_shape.size() - 1);
    for (std::size_t i = 0; i < spec.sample_count; ++i) {
        const SampleParams p = draw_sample_params(spec, i);
        d.samples.push_back(render_sample(spec, p));
        std::vector<double> params = normalized_params(spec, p);
        d.labels.emplace_back(params.begin(), params.begin() + spec.label_length);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Splits and batch assembly
// ---------------------------------------------------------------------------

struct DatasetSplit {
    Dataset train;
    Dataset val;
    Dataset test;
};

inline Dataset slice_dataset(const Dataset& d, std::size_t begin, std::size_t end) {
    Dataset out;
    out.samples.assign(d.samples.begin() + begin, d.samples.begin() + end);
    out.labels.assign(d.labels.begin() + begin, d.labels.begin() + end);
    out.resolution_tag = d.resolution_tag;
    return out;
}

// Contiguous deterministic split; generated samples are already i.i.d.
inline DatasetSplit split_dataset(const Dataset& d, double train_fraction, double val_fraction) {
    validate_dataset(d);
    const std::size_t n = d.size();
    std::size_t n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    if (n_train == 0) throw ConfigError("split: empty training partition");
    DatasetSplit s;
    s.train = slice_dataset(d, 0, n_train);
    s.val = n_val > 0 ? slice_dataset(d, n_train, n_train + n_val)
                      : slice_dataset(d, 0, n_train);
    s.test = n_train + n_val < n ? slice_dataset(d, n_train + n_val, n)
                                 : slice_dataset(d, 0, n_train);
    return s;
}

struct Batch {
    Tensor inputs;   // [B, sample shape...]
    Tensor targets;  // [B, label length]
};

inline Batch make_batch(const Dataset& d, const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DataError(DataErrorKind::invalid, "batch: no indices");
    const Shape& sample = d.sample_shape();
    const std::size_t m = d.label_length();
    Shape in_shape{indices.size()};
    in_shape.insert(in_shape.end(), sample.begin(), sample.end());
    Batch b{Tensor::zeros(in_shape), Tensor::zeros({indices.size(), m})};
    const std::size_t sample_elems = shape_numel(sample);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t idx = indices[i];
        std::copy(d.samples[idx].data.begin(), d.samples[idx].data.end(),
                  b.inputs.data.begin() + i * sample_elems);
        std::copy(d.labels[idx].begin(), d.labels[idx].end(), b.targets.data.begin() + i * m);
    }
    return b;
}

}  // namespace mrmf
