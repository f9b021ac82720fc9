#include <gtest/gtest.h>

#include <cmath>
#include <cstddef>
#include <vector>

#include "mrmf/dataset.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/loss.hpp"
#include "mrmf/model.hpp"
#include "mrmf/optimizer.hpp"
#include "mrmf/parallel.hpp"
#include "mrmf/rng.hpp"
#include "oracles.hpp"

using mrmf::allocate_workers;
using mrmf::AllocationInput;
using mrmf::Batch;
using mrmf::Model;
using mrmf::OptimizerConfig;
using mrmf::Rng;
using mrmf::shard_batch;
using mrmf::ShardRange;
using mrmf::Tensor;
using mrmf::WorkerGroup;

namespace {

Model bn_model(std::uint64_t seed) {
    std::vector<mrmf::LayerSpec> specs = {
        mrmf::conv_layer({3}, {2}, {1}, 0, 4), mrmf::batch_norm_layer(),  mrmf::relu_layer(),
        mrmf::flatten_layer(),                 mrmf::fc_layer(0, 6),      mrmf::tanh_layer(),
        mrmf::fc_layer(6, 3),
    };
    Model m = mrmf::make_model({10, 2}, std::move(specs));
    Rng rng(seed);
    mrmf::init_params(m, rng);
    return m;
}

Model plain_model(std::uint64_t seed) {
    std::vector<mrmf::LayerSpec> specs = {
        mrmf::conv_layer({3}, {1}, {1}, 0, 3),
        mrmf::relu_layer(),
        mrmf::flatten_layer(),
        mrmf::fc_layer(0, 4),
    };
    Model m = mrmf::make_model({8, 1}, std::move(specs));
    Rng rng(seed);
    mrmf::init_params(m, rng);
    return m;
}

Batch random_batch(Rng& rng, const mrmf::Shape& sample_shape, std::size_t n, std::size_t m) {
    mrmf::Shape in_shape{n};
    in_shape.insert(in_shape.end(), sample_shape.begin(), sample_shape.end());
    Batch b{oracle::random_tensor(rng, in_shape), oracle::random_tensor(rng, {n, m}, 0.0, 1.0)};
    return b;
}

// Reference single-threaded step: forward, full-batch mean-squared-error
// gradient, backward, one optimizer update.
double serial_step(Model& m, mrmf::Optimizer& opt, const Batch& batch) {
    mrmf::ForwardCache cache;
    const Tensor pred = model_forward(m, batch.inputs, true, &cache);
    const double loss = mrmf::mse_loss(pred, batch.targets);
    const Tensor dloss = mrmf::mse_loss_grad(pred, batch.targets);
    mrmf::ModelGrads g = model_backward(m, cache, dloss);
    opt.step(m, g);
    return loss;
}

}  // namespace

TEST(ShardBatch, CoversBatchContiguouslyWithBalancedSizes) {
    Rng rng(1);
    for (int iter = 0; iter < 200; ++iter) {
        const std::size_t n = 1 + rng.next_below(40);
        const std::size_t w = 1 + rng.next_below(10);
        std::vector<ShardRange> shards = shard_batch(n, w);
        ASSERT_EQ(shards.size(), w);
        std::size_t at = 0;
        std::size_t lo = n, hi = 0;
        for (const ShardRange& s : shards) {
            ASSERT_EQ(s.begin, at);
            at = s.end;
            lo = std::min(lo, s.size());
            hi = std::max(hi, s.size());
        }
        ASSERT_EQ(at, n);
        EXPECT_LE(hi - lo, 1u);
        // Remainder lands on the trailing shards.
        for (std::size_t i = 1; i < w; ++i) ASSERT_GE(shards[i].size(), shards[i - 1].size());
    }
}

TEST(ShardBatch, MoreWorkersThanSamplesLeavesLeadingShardsEmpty) {
    std::vector<ShardRange> shards = shard_batch(2, 5);
    ASSERT_EQ(shards.size(), 5u);
    EXPECT_EQ(shards[0].size(), 0u);
    EXPECT_EQ(shards[1].size(), 0u);
    EXPECT_EQ(shards[2].size(), 0u);
    EXPECT_EQ(shards[3].size(), 1u);
    EXPECT_EQ(shards[4].size(), 1u);
}

TEST(AllocateWorkers, ProportionalSplitWithRounding) {
    auto [d1, c1] = allocate_workers({1.0, 1.0, 2});
    EXPECT_EQ(d1, 1u);
    EXPECT_EQ(c1, 1u);

    auto [d2, c2] = allocate_workers({3.0, 1.0, 8});
    EXPECT_EQ(d2, 6u);
    EXPECT_EQ(c2, 2u);

    auto [d3, c3] = allocate_workers({197.61, 91.52, 32});
    EXPECT_EQ(d3, 22u);
    EXPECT_EQ(c3, 10u);

    // Same estimates, allocation granularity of 4 workers.
    auto [d4, c4] = allocate_workers({197.61, 91.52, 32}, 4);
    EXPECT_EQ(d4, 20u);
    EXPECT_EQ(c4, 12u);
}

TEST(AllocateWorkers, ClampsKeepBothGroupsNonEmpty) {
    auto [d1, c1] = allocate_workers({1000.0, 0.001, 4});
    EXPECT_EQ(d1, 3u);
    EXPECT_EQ(c1, 1u);

    auto [d2, c2] = allocate_workers({0.001, 1000.0, 4});
    EXPECT_EQ(d2, 1u);
    EXPECT_EQ(c2, 3u);
}

TEST(AllocateWorkers, RejectsBadInputs) {
    EXPECT_THROW(allocate_workers({0.0, 1.0, 4}), mrmf::ConfigError);
    EXPECT_THROW(allocate_workers({1.0, -1.0, 4}), mrmf::ConfigError);
    EXPECT_THROW(allocate_workers({1.0, 1.0, 1}), mrmf::ConfigError);
    EXPECT_THROW(allocate_workers({1.0, 1.0, 6}, 4), mrmf::ConfigError);
    EXPECT_THROW(allocate_workers({1.0, 1.0, 4}, 0), mrmf::ConfigError);
}

TEST(ModelChecksum, SensitiveToSingleBitAndState) {
    Model m = bn_model(2);
    const std::uint64_t base = mrmf::model_checksum(m);
    EXPECT_EQ(mrmf::model_checksum(m), base);

    Model tweaked = m;
    tweaked.params[0].tensors[0].data[0] =
        std::nextafter(tweaked.params[0].tensors[0].data[0], 1e9);
    EXPECT_NE(mrmf::model_checksum(tweaked), base);

    Model state_tweaked = m;
    state_tweaked.state[1].tensors[0].data[0] += 1.0;
    EXPECT_NE(mrmf::model_checksum(state_tweaked), base);
}

TEST(WorkerGroup, SingleWorkerMatchesSerialEngineBitwise) {
    Model serial = bn_model(3);
    Model grouped = serial;
    OptimizerConfig opt;
    opt.kind = mrmf::OptimizerKind::adam;
    opt.learning_rate = 0.01;

    mrmf::Optimizer serial_opt(opt);
    WorkerGroup group(grouped, opt, 1);

    Rng rng(4);
    for (int step = 0; step < 5; ++step) {
        const Batch batch = random_batch(rng, {10, 2}, 7, 3);
        const double serial_loss = serial_step(serial, serial_opt, batch);
        mrmf::ParallelStepResult r = group.step(batch);
        ASSERT_EQ(r.loss, serial_loss) << "step " << step;
        ASSERT_TRUE(mrmf::models_bitwise_equal(group.model(), serial)) << "step " << step;
    }
}

TEST(WorkerGroup, WorkerCountLeavesTrajectoryNearlyUnchanged) {
    // One step from a shared start: the combined gradient is the exact
    // full-batch gradient for every W, so parameters agree to tight floating
    // point tolerance even with batch norm in the model.
    Rng rng(5);
    const Batch batch = random_batch(rng, {10, 2}, 13, 3);  // 13 shards unevenly
    OptimizerConfig opt;
    opt.learning_rate = 0.05;
    opt.momentum = 0.9;

    Model reference = bn_model(6);
    mrmf::Optimizer ref_opt(opt);
    const double ref_loss = serial_step(reference, ref_opt, batch);

    for (std::size_t workers : {1u, 2u, 4u, 8u}) {
        Model start = bn_model(6);
        WorkerGroup group(start, opt, workers);
        mrmf::ParallelStepResult r = group.step(batch);
        EXPECT_NEAR(r.loss, ref_loss, 1e-12) << "W=" << workers;

        const Model& got = group.model();
        for (std::size_t i = 0; i < got.params.size(); ++i)
            for (std::size_t j = 0; j < got.params[i].tensors.size(); ++j) {
                const Tensor& a = got.params[i].tensors[j];
                const Tensor& b = reference.params[i].tensors[j];
                for (std::size_t e = 0; e < a.numel(); ++e)
                    ASSERT_NEAR(a.data[e], b.data[e], 1e-10)
                        << "W=" << workers << " layer " << i << " tensor " << j;
            }
        for (std::size_t i = 0; i < got.state.size(); ++i)
            for (std::size_t j = 0; j < got.state[i].tensors.size(); ++j) {
                const Tensor& a = got.state[i].tensors[j];
                const Tensor& b = reference.state[i].tensors[j];
                for (std::size_t e = 0; e < a.numel(); ++e)
                    ASSERT_NEAR(a.data[e], b.data[e], 1e-10) << "W=" << workers;
            }
    }
}

TEST(WorkerGroup, MultiStepTrajectoriesStayAligned) {
    Rng rng(7);
    std::vector<Batch> batches;
    for (int i = 0; i < 10; ++i) batches.push_back(random_batch(rng, {8, 1}, 6, 4));

    OptimizerConfig opt;
    opt.learning_rate = 0.1;

    Model ref = plain_model(8);
    mrmf::Optimizer ref_opt(opt);
    std::vector<double> ref_losses;
    for (const Batch& b : batches) ref_losses.push_back(serial_step(ref, ref_opt, b));

    for (std::size_t workers : {2u, 4u}) {
        Model start = plain_model(8);
        WorkerGroup group(start, opt, workers);
        for (std::size_t s = 0; s < batches.size(); ++s) {
            mrmf::ParallelStepResult r = group.step(batches[s]);
            ASSERT_NEAR(r.loss, ref_losses[s], 1e-10) << "W=" << workers << " step " << s;
        }
        const Model& got = group.model();
        for (std::size_t i = 0; i < got.params.size(); ++i)
            for (std::size_t j = 0; j < got.params[i].tensors.size(); ++j)
                for (std::size_t e = 0; e < got.params[i].tensors[j].numel(); ++e)
                    ASSERT_NEAR(got.params[i].tensors[j].data[e],
                                ref.params[i].tensors[j].data[e], 1e-10);
    }
}

TEST(WorkerGroup, ReplicaChecksumsAgreeEveryStep) {
    Model m = bn_model(9);
    OptimizerConfig opt;
    opt.learning_rate = 0.05;
    WorkerGroup group(m, opt, 4);

    Rng rng(10);
    for (int step = 0; step < 3; ++step) {
        const Batch b = random_batch(rng, {10, 2}, 9, 3);
        mrmf::ParallelStepResult r = group.step(b);
        ASSERT_EQ(r.checksums.size(), 4u);
        for (std::size_t w = 1; w < 4; ++w) EXPECT_EQ(r.checksums[w], r.checksums[0]);
        EXPECT_EQ(r.checksums[0], mrmf::model_checksum(group.model()));
    }
}

TEST(WorkerGroup, IdenticalShardsHookFeedsEveryWorkerTheFullBatch) {
    // With identical shards, every worker sees the same data, and the summed
    // gradient equals W times the per-worker share; the normalization by the
    // global count keeps the update equal to the single-worker one.
    Rng rng(11);
    const Batch batch = random_batch(rng, {8, 1}, 5, 4);
    OptimizerConfig opt;
    opt.learning_rate = 0.05;

    Model lone = plain_model(12);
    WorkerGroup single(lone, opt, 1);
    mrmf::ParallelStepResult a = single.step(batch);

    Model rep = plain_model(12);
    WorkerGroup mirrored(rep, opt, 3, /*test_identical_shards=*/true);
    mrmf::ParallelStepResult b = mirrored.step(batch);

    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    const Model& ma = single.model();
    const Model& mb = mirrored.model();
    for (std::size_t i = 0; i < ma.params.size(); ++i)
        for (std::size_t j = 0; j < ma.params[i].tensors.size(); ++j)
            for (std::size_t e = 0; e < ma.params[i].tensors[j].numel(); ++e)
                ASSERT_NEAR(ma.params[i].tensors[j].data[e], mb.params[i].tensors[j].data[e],
                            1e-12);
}

TEST(WorkerGroup, NonFiniteInputsAbortWithoutUpdating) {
    Model m = plain_model(13);
    OptimizerConfig opt;
    WorkerGroup group(m, opt, 2);

    Rng rng(14);
    Batch bad = random_batch(rng, {8, 1}, 4, 4);
    bad.inputs.data[3] = std::nan("");

    const std::uint64_t before = mrmf::model_checksum(group.model());
    EXPECT_THROW(group.step(bad), mrmf::TrainError);
    EXPECT_EQ(mrmf::model_checksum(group.model()), before);

    // The group survives the abort and keeps training on good data.
    Batch good = random_batch(rng, {8, 1}, 4, 4);
    EXPECT_NO_THROW(group.step(good));
}

TEST(WorkerGroup, MalformedBatchesAreRejectedUpFront) {
    Model m = plain_model(15);
    OptimizerConfig opt;
    WorkerGroup group(m, opt, 2);

    Rng rng(16);
    Batch wrong_shape = random_batch(rng, {6, 1}, 4, 4);
    EXPECT_THROW(group.step(wrong_shape), mrmf::ShapeError);

    Batch wrong_labels = random_batch(rng, {8, 1}, 4, 3);
    EXPECT_THROW(group.step(wrong_labels), mrmf::ShapeError);

    Batch good = random_batch(rng, {8, 1}, 4, 4);
    EXPECT_NO_THROW(group.step(good));
}
