#include <gtest/gtest.h>

#include <cstddef>
#include <vector>

#include "mrmf/dataset.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/model.hpp"
#include "mrmf/pipeline.hpp"
#include "mrmf/rng.hpp"
#include "mrmf/train.hpp"

using mrmf::Dataset;
using mrmf::Model;
using mrmf::Phase;
using mrmf::Rng;
using mrmf::StopCondition;
using mrmf::TrainJob;
using mrmf::TrainResult;

namespace {

std::vector<mrmf::LayerSpec> tiny_arch() {
    return {
        mrmf::conv_layer({3}, {2}, {1}, 0, 4),
        mrmf::batch_norm_layer(),
        mrmf::relu_layer(),
        mrmf::flatten_layer(),
        mrmf::fc_layer(0, 8),
        mrmf::relu_layer(),
        mrmf::fc_layer(8, 3),
    };
}

mrmf::DatasetSplit tiny_data() {
    mrmf::SyntheticTaskSpec spec;
    spec.sample_shape = {16, 1};
    spec.label_length = 3;
    spec.components = 1;
    spec.max_frequency = 1;
    spec.sample_count = 24;
    spec.seed = 5;
    return mrmf::split_dataset(mrmf::generate_synthetic(spec), 0.75, 0.25);
}

TrainJob tiny_job(const mrmf::DatasetSplit& data, std::uint64_t init_seed) {
    TrainJob job;
    job.model = mrmf::make_model(data.train.sample_shape(), tiny_arch());
    Rng rng(init_seed);
    mrmf::init_params(job.model, rng);
    job.train = &data.train;
    job.val = &data.val;
    job.stop = StopCondition{1e-9, 1, 3};
    job.optimizer.learning_rate = 0.05;
    job.batch_size = 6;
    job.shuffle_seed = 42;
    job.stage = 1;
    job.phase = Phase::coarse;
    job.deterministic_timing = true;
    return job;
}

bool records_equal(const std::vector<mrmf::MetricsRecord>& a,
                   const std::vector<mrmf::MetricsRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].stage != b[i].stage || a[i].phase != b[i].phase || a[i].epoch != b[i].epoch ||
            a[i].train_loss != b[i].train_loss || a[i].val_loss != b[i].val_loss ||
            a[i].epoch_seconds != b[i].epoch_seconds ||
            a[i].samples_per_sec != b[i].samples_per_sec)
            return false;
    return true;
}

}  // namespace

TEST(Train, SameSeedsSameResultBitwise) {
    const mrmf::DatasetSplit data = tiny_data();
    TrainResult a = train_until_stop(tiny_job(data, 1));
    TrainResult b = train_until_stop(tiny_job(data, 1));
    EXPECT_TRUE(records_equal(a.records, b.records));
    EXPECT_TRUE(mrmf::models_bitwise_equal(a.model, b.model));
    EXPECT_EQ(a.final_val_loss, b.final_val_loss);
    EXPECT_EQ(a.best_val_loss, b.best_val_loss);
}

TEST(Train, SeedsChangeTheTrajectory) {
    const mrmf::DatasetSplit data = tiny_data();
    TrainResult a = train_until_stop(tiny_job(data, 1));

    TrainResult other_init = train_until_stop(tiny_job(data, 2));
    EXPECT_FALSE(mrmf::models_bitwise_equal(a.model, other_init.model));

    TrainJob job = tiny_job(data, 1);
    job.shuffle_seed = 43;
    TrainResult other_shuffle = train_until_stop(job);
    EXPECT_FALSE(mrmf::models_bitwise_equal(a.model, other_shuffle.model));
}

TEST(Train, RecordsCoverEveryEpochWithLabels) {
    const mrmf::DatasetSplit data = tiny_data();
    TrainResult r = train_until_stop(tiny_job(data, 3));
    ASSERT_EQ(r.records.size(), 3u);  // tiny epsilon, runs to the cap
    ASSERT_EQ(r.loss_history.size(), r.records.size());
    for (std::size_t i = 0; i < r.records.size(); ++i) {
        EXPECT_EQ(r.records[i].epoch, i + 1);
        EXPECT_EQ(r.records[i].stage, 1u);
        EXPECT_EQ(r.records[i].phase, Phase::coarse);
        EXPECT_EQ(r.records[i].train_loss, r.loss_history[i]);
    }
    EXPECT_EQ(r.final_val_loss, r.records.back().val_loss);
    double best = r.records[0].val_loss;
    for (const auto& rec : r.records) best = std::min(best, rec.val_loss);
    EXPECT_EQ(r.best_val_loss, best);
}

TEST(Train, DeterministicTimingUsesFixedProxies) {
    const mrmf::DatasetSplit data = tiny_data();
    TrainResult r = train_until_stop(tiny_job(data, 4));
    for (const auto& rec : r.records) {
        EXPECT_EQ(rec.epoch_seconds, 1.0);
        EXPECT_EQ(rec.samples_per_sec, static_cast<double>(data.train.size()));
    }
    EXPECT_EQ(r.total_seconds, static_cast<double>(r.records.size()));

    TrainJob wall = tiny_job(data, 4);
    wall.deterministic_timing = false;
    TrainResult w = train_until_stop(wall);
    for (const auto& rec : w.records) {
        EXPECT_GT(rec.epoch_seconds, 0.0);
        EXPECT_GT(rec.samples_per_sec, 0.0);
    }
}

TEST(Train, PlateauStopsBeforeTheCap) {
    const mrmf::DatasetSplit data = tiny_data();
    TrainJob job = tiny_job(data, 5);
    job.stop = StopCondition{1e9, 1, 50};  // every reduction is below epsilon
    TrainResult r = train_until_stop(job);
    EXPECT_EQ(r.records.size(), 2u);  // patience + 1 epochs, then stop
}

TEST(Train, ValidationFallsBackToTrainingSet) {
    const mrmf::DatasetSplit data = tiny_data();
    TrainJob with_val = tiny_job(data, 6);
    with_val.val = &data.train;
    TrainJob without_val = tiny_job(data, 6);
    without_val.val = nullptr;
    TrainResult a = train_until_stop(with_val);
    TrainResult b = train_until_stop(without_val);
    EXPECT_TRUE(records_equal(a.records, b.records));
    EXPECT_TRUE(mrmf::models_bitwise_equal(a.model, b.model));
}

TEST(Train, RejectsInconsistentJobs) {
    const mrmf::DatasetSplit data = tiny_data();

    TrainJob no_data = tiny_job(data, 7);
    no_data.train = nullptr;
    EXPECT_THROW(train_until_stop(no_data), mrmf::TrainError);

    TrainJob bad_batch = tiny_job(data, 7);
    bad_batch.batch_size = 0;
    EXPECT_THROW(train_until_stop(bad_batch), mrmf::ConfigError);

    TrainJob wrong_shape = tiny_job(data, 7);
    wrong_shape.model = mrmf::make_model({8, 1}, tiny_arch());
    EXPECT_THROW(train_until_stop(wrong_shape), mrmf::ShapeError);

    TrainJob wrong_labels = tiny_job(data, 7);
    std::vector<mrmf::LayerSpec> arch = tiny_arch();
    arch.back() = mrmf::fc_layer(8, 5);
    wrong_labels.model = mrmf::make_model({16, 1}, std::move(arch));
    EXPECT_THROW(train_until_stop(wrong_labels), mrmf::ShapeError);
}

TEST(Train, OversizedBatchIsClampedToDatasetSize) {
    const mrmf::DatasetSplit data = tiny_data();
    TrainJob big = tiny_job(data, 8);
    big.batch_size = 1000;
    TrainJob exact = tiny_job(data, 8);
    exact.batch_size = data.train.size();
    TrainResult a = train_until_stop(big);
    TrainResult b = train_until_stop(exact);
    EXPECT_TRUE(records_equal(a.records, b.records));
    EXPECT_TRUE(mrmf::models_bitwise_equal(a.model, b.model));
}

TEST(Evaluate, IndependentOfBatchSize) {
    const mrmf::DatasetSplit data = tiny_data();
    TrainResult r = train_until_stop(tiny_job(data, 9));
    // Eval-mode predictions are per-sample and batches are consecutive, so
    // the accumulated loss is bitwise identical for every batch size.
    const double whole = evaluate(r.model, data.val, data.val.size());
    for (std::size_t bs : {std::size_t{1}, std::size_t{2}, std::size_t{5}, std::size_t{100}})
        EXPECT_EQ(evaluate(r.model, data.val, bs), whole) << "batch " << bs;
    EXPECT_THROW(evaluate(r.model, data.val, 0), mrmf::ConfigError);
}

TEST(Baseline, EmptyScheduleEqualsPlainTrainingBitwise) {
    // An empty stage list must degenerate to exactly the single-model
    // training path, including seed derivation: same records, same model.
    const mrmf::DatasetSplit data = tiny_data();
    const std::uint64_t master_seed = 11;

    mrmf::PipelineSpec spec;
    spec.architecture = tiny_arch();
    spec.finetune_stop = StopCondition{1e-9, 1, 3};
    spec.finetune_opt.learning_rate = 0.05;
    spec.finetune_batch = 6;

    mrmf::PipelineOptions options;
    options.seed = master_seed;
    options.deterministic_timing = true;
    mrmf::PipelineResult pipeline = run_pipeline(spec, data.train, data.val, options);
    EXPECT_TRUE(pipeline.stages.empty());

    TrainJob job;
    job.model = mrmf::make_model(data.train.sample_shape(), tiny_arch());
    Rng init_rng(mrmf::derive_seed(master_seed, mrmf::seed_tag::finetune_init, 0));
    mrmf::init_params(job.model, init_rng);
    job.train = &data.train;
    job.val = &data.val;
    job.stop = spec.finetune_stop;
    job.optimizer = spec.finetune_opt;
    job.batch_size = spec.finetune_batch;
    job.shuffle_seed = mrmf::derive_seed(master_seed, mrmf::seed_tag::finetune_shuffle, 0);
    job.stage = 1;
    job.phase = Phase::finetune;
    job.deterministic_timing = true;
    TrainResult direct = train_until_stop(job);

    EXPECT_TRUE(records_equal(pipeline.records, direct.records));
    EXPECT_TRUE(mrmf::models_bitwise_equal(pipeline.model, direct.model));
    EXPECT_EQ(pipeline.final_val_loss, direct.final_val_loss);
    EXPECT_EQ(pipeline.best_val_loss, direct.best_val_loss);
}
