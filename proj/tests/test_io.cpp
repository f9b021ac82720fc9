#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mrmf/checkpoint.hpp"
#include "mrmf/dataset.hpp"
#include "mrmf/dataset_io.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/model.hpp"
#include "mrmf/rng.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using mrmf::DataError;
using mrmf::DataErrorKind;
using mrmf::Dataset;
using mrmf::Model;
using mrmf::Rng;
using mrmf::Shape;
using mrmf::Tensor;

namespace {

fs::path temp_file(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "mrmf_io_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::vector<unsigned char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

// Values that survive the f64 -> f32 -> f64 narrowing unchanged, so the
// round-trip comparison can be exact.
Dataset f32_exact_dataset(std::uint64_t seed, const Shape& sample_shape, std::size_t n,
                          std::size_t m) {
    Rng rng(seed);
    Dataset d;
    d.resolution_tag = mrmf::ResolutionFactors::identity(sample_shape.size() - 1);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t = oracle::random_tensor(rng, sample_shape);
        for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
        d.samples.push_back(std::move(t));
        std::vector<double> label(m);
        for (double& v : label) v = static_cast<double>(static_cast<float>(rng.uniform(0.0, 1.0)));
        d.labels.push_back(std::move(label));
    }
    return d;
}

Model sample_model(std::uint64_t seed) {
    std::vector<mrmf::LayerSpec> specs;
    specs.push_back(mrmf::conv_layer({3}, {2}, {1}, 0, 4));
    specs.push_back(mrmf::batch_norm_layer());
    specs.push_back(mrmf::relu_layer());
    specs.push_back(mrmf::flatten_layer());
    specs.push_back(mrmf::fc_layer(0, 5));
    Model m = mrmf::make_model({10, 2}, std::move(specs));
    Rng rng(seed);
    mrmf::init_params(m, rng);
    return m;
}

}  // namespace

TEST(DatasetFile, GoldenBytesForMinimalContainer) {
    // 1 sample, rank 1, extent 2, 1 channel, 1 label value. Header is
    // magic + u32 count + u8 rank + u32 extent + u32 channels + u32 labels,
    // then f32 payloads, everything little-endian: 33 bytes total.
    Dataset d;
    d.resolution_tag = mrmf::ResolutionFactors::identity(1);
    Tensor t = Tensor::zeros({2, 1});
    t[0] = 1.0;
    t[1] = -2.0;
    d.samples.push_back(t);
    d.labels.push_back({0.5});

    fs::path p = temp_file("golden.mrd");
    mrmf::write_dataset(d, p.string());

    const std::vector<unsigned char> want = {
        'M', 'R', 'D', '1',      // magic
        0x01, 0x00, 0x00, 0x00,  // sample count
        0x01,                    // spatial rank
        0x02, 0x00, 0x00, 0x00,  // extent
        0x01, 0x00, 0x00, 0x00,  // channels
        0x01, 0x00, 0x00, 0x00,  // label length
        0x00, 0x00, 0x80, 0x3f,  // 1.0f
        0x00, 0x00, 0x00, 0xc0,  // -2.0f
        0x00, 0x00, 0x00, 0x3f,  // 0.5f
    };
    EXPECT_EQ(slurp(p), want);
}

TEST(DatasetFile, RoundTripIsBitwiseAtStoragePrecision) {
    for (std::size_t rank = 1; rank <= 3; ++rank) {
        Shape shape = rank == 1 ? Shape{6, 2} : rank == 2 ? Shape{4, 3, 2} : Shape{2, 3, 2, 2};
        Dataset d = f32_exact_dataset(40 + rank, shape, 5, 3);
        fs::path p = temp_file("roundtrip.mrd");
        mrmf::write_dataset(d, p.string());
        Dataset r = mrmf::read_dataset(p.string());
        ASSERT_EQ(r.size(), d.size());
        ASSERT_EQ(r.sample_shape(), d.sample_shape());
        for (std::size_t i = 0; i < d.size(); ++i) {
            EXPECT_TRUE(mrmf::bitwise_equal(r.samples[i], d.samples[i]));
            EXPECT_EQ(r.labels[i], d.labels[i]);
        }
    }
}

TEST(DatasetFile, CorruptionIsDiagnosed) {
    Dataset d = f32_exact_dataset(50, {4, 1}, 2, 2);
    fs::path p = temp_file("corrupt.mrd");
    mrmf::write_dataset(d, p.string());
    const std::vector<unsigned char> good = slurp(p);

    auto read_kind = [&](const std::vector<unsigned char>& bytes) {
        spit(p, bytes);
        try {
            mrmf::read_dataset(p.string());
            ADD_FAILURE() << "expected DataError";
            return DataErrorKind::io;
        } catch (const DataError& e) {
            return e.kind();
        }
    };

    std::vector<unsigned char> bad = good;
    bad[0] = 'X';
    EXPECT_EQ(read_kind(bad), DataErrorKind::bad_magic);

    bad = good;
    bad.resize(good.size() - 3);  // cut mid-label
    EXPECT_EQ(read_kind(bad), DataErrorKind::truncated);

    bad = good;
    bad.resize(10);  // cut mid-header
    EXPECT_EQ(read_kind(bad), DataErrorKind::truncated);

    bad = good;
    bad.push_back(0x00);
    EXPECT_EQ(read_kind(bad), DataErrorKind::invalid);

    bad = good;
    bad[9] = bad[10] = bad[11] = bad[12] = 0;  // spatial extent = 0
    EXPECT_EQ(read_kind(bad), DataErrorKind::bad_header);

    bad = good;
    bad[4] = 0;  // sample count = 0
    EXPECT_EQ(read_kind(bad), DataErrorKind::bad_header);

    bad = good;
    bad[8] = 7;  // spatial rank out of range
    EXPECT_EQ(read_kind(bad), DataErrorKind::bad_header);

    EXPECT_THROW(mrmf::read_dataset((p.parent_path() / "missing.mrd").string()), DataError);
}

TEST(DatasetFile, HugeExtentsRejectedBeforeAllocation) {
    // Header advertises an absurd extent; the reader must refuse instead of
    // trying to allocate.
    std::vector<unsigned char> bytes = {
        'M', 'R', 'D', '1', 0x01, 0x00, 0x00, 0x00, 0x02,
        0xff, 0xff, 0xff, 0xff,  // extent 2^32-1
        0xff, 0xff, 0xff, 0xff,  // extent 2^32-1
        0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00,
    };
    fs::path p = temp_file("huge.mrd");
    spit(p, bytes);
    try {
        mrmf::read_dataset(p.string());
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_EQ(e.kind(), DataErrorKind::extent_overflow);
    }
}

TEST(CheckpointFile, RoundTripIsBitwise) {
    Model m = sample_model(7);
    // Push the batch norm running stats away from their init so state tensors
    // carry real content through the file.
    Rng rng(8);
    mrmf::ForwardCache cache;
    model_forward(m, oracle::random_tensor(rng, {4, 10, 2}), true, &cache);

    fs::path p = temp_file("model.mrc");
    mrmf::save_checkpoint(m, p.string());
    Model r = mrmf::load_checkpoint(p.string());
    EXPECT_TRUE(mrmf::models_bitwise_equal(r, m));
    EXPECT_EQ(r.output_shape, m.output_shape);

    // Same model saved twice produces identical files.
    fs::path p2 = temp_file("model2.mrc");
    mrmf::save_checkpoint(m, p2.string());
    EXPECT_EQ(slurp(p), slurp(p2));
}

TEST(CheckpointFile, CorruptionIsDiagnosed) {
    Model m = sample_model(9);
    fs::path p = temp_file("corrupt.mrc");
    mrmf::save_checkpoint(m, p.string());
    const std::vector<unsigned char> good = slurp(p);

    auto read_kind = [&](const std::vector<unsigned char>& bytes) {
        spit(p, bytes);
        try {
            mrmf::load_checkpoint(p.string());
            ADD_FAILURE() << "expected DataError";
            return DataErrorKind::io;
        } catch (const DataError& e) {
            return e.kind();
        }
    };

    std::vector<unsigned char> bad = good;
    bad[3] = '9';
    EXPECT_EQ(read_kind(bad), DataErrorKind::bad_magic);

    bad = good;
    bad[4] = 0x02;  // version 2
    EXPECT_EQ(read_kind(bad), DataErrorKind::bad_version);

    bad = good;
    bad.resize(good.size() - 5);
    EXPECT_EQ(read_kind(bad), DataErrorKind::truncated);

    bad = good;
    bad.push_back(0x00);
    EXPECT_EQ(read_kind(bad), DataErrorKind::invalid);

    // First layer kind byte sits right after magic, version, input shape
    // (u8 rank + 2 u32 extents) and the u32 layer count.
    const std::size_t kind_off = 4 + 4 + 1 + 8 + 4;
    bad = good;
    bad[kind_off] = 0xee;
    EXPECT_EQ(read_kind(bad), DataErrorKind::bad_header);
}
