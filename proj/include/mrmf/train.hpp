#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mrmf/dataset.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/loss.hpp"
#include "mrmf/metrics.hpp"
#include "mrmf/model.hpp"
#include "mrmf/optimizer.hpp"
#include "mrmf/parallel.hpp"
#include "mrmf/rng.hpp"
#include "mrmf/stop.hpp"

namespace mrmf {

// Eval-mode loss over the whole dataset, consumed in fixed consecutive
// batches so the accumulation order never depends on shuffling.
inline double evaluate(const Model& model, const Dataset& data, std::size_t batch_size) {
    if (batch_size < 1) throw ConfigError("evaluate: batch_size must be >= 1");
    const std::size_t n = data.size();
    const std::size_t m = data.label_length();
    double sse = 0.0;
    for (std::size_t at = 0; at < n; at += batch_size) {
        const std::size_t take = std::min(batch_size, n - at);
        std::vector<std::size_t> idx(take);
        std::iota(idx.begin(), idx.end(), at);
        const Batch b = make_batch(data, idx);
        const Tensor pred = model_forward(model, b.inputs);
        for (std::size_t i = 0; i < pred.numel(); ++i) {
            const double d = pred.data[i] - b.targets.data[i];
            sse += d * d;
        }
    }
    return sse / (static_cast<double>(n) * static_cast<double>(m));
}

struct TrainJob {
    Model model;
    const Dataset* train = nullptr;
    const Dataset* val = nullptr;  // falls back to the training set when null
    StopCondition stop;
    OptimizerConfig optimizer;
    std::size_t batch_size = 1;
    std::uint64_t shuffle_seed = 0;
    std::size_t workers = 1;

    // Metrics labeling only.
    std::size_t stage = 0;
    Phase phase = Phase::finetune;

    // Replace measured epoch wall time with a fixed proxy so emitted metrics
    // are byte-reproducible across runs.
    bool deterministic_timing = false;
};

struct TrainResult {
    Model model;
    std::vector<MetricsRecord> records;
    std::vector<double> loss_history;  // per-epoch training loss
    double final_val_loss = 0.0;
    double best_val_loss = 0.0;
    double total_seconds = 0.0;
};

// Runs full shuffled epochs of synchronous mini-batch SGD until the stop
// condition fires. One MetricsRecord per epoch. Deterministic for a fixed
// seed and worker count.
inline TrainResult train_until_stop(const TrainJob& job) {
    if (!job.train) throw TrainError("train: no training dataset");
    validate_dataset(*job.train);
    validate_stop_condition_lenient(job.stop);
    if (job.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    const Dataset& train = *job.train;
    const Dataset& val = job.val ? *job.val : train;
    if (train.sample_shape() != job.model.input_shape)
        throw ShapeError("train: dataset sample shape " + shape_to_string(train.sample_shape()) +
                         " does not match model input " + shape_to_string(job.model.input_shape));
    if (Shape{train.label_length()} != job.model.output_shape)
        throw ShapeError("train: label length " + std::to_string(train.label_length()) +
                         " does not match model output " + shape_to_string(job.model.output_shape));

    const std::size_t n = train.size();
    const std::size_t batch_size = std::min(job.batch_size, n);
    WorkerGroup group(job.model, job.optimizer, job.workers);

    TrainResult result;
    std::vector<std::size_t> perm(n);
    for (std::size_t epoch = 1;; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();

        std::iota(perm.begin(), perm.end(), 0);
        Rng shuffle_rng(derive_seed(job.shuffle_seed, 0x45504F43ull, epoch));
        shuffle_rng.shuffle(perm);

        double weighted_loss = 0.0;
        for (std::size_t at = 0; at < n; at += batch_size) {
            const std::size_t take = std::min(batch_size, n - at);
            const std::vector<std::size_t> idx(perm.begin() + at, perm.begin() + at + take);
            const Batch batch = make_batch(train, idx);
            ParallelStepResult step = group.step(batch);
            weighted_loss += step.loss * static_cast<double>(take);
        }
        const double train_loss = weighted_loss / static_cast<double>(n);
        if (!std::isfinite(train_loss))
            throw TrainError("train: non-finite training loss at epoch " + std::to_string(epoch));
        const double val_loss = evaluate(group.model(), val, batch_size);
        if (!std::isfinite(val_loss))
            throw TrainError("train: non-finite validation loss at epoch " + std::to_string(epoch));

        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        MetricsRecord rec;
        rec.stage = job.stage;
        rec.phase = job.phase;
        rec.epoch = epoch;
        rec.train_loss = train_loss;
        rec.val_loss = val_loss;
        if (job.deterministic_timing) {
            rec.epoch_seconds = 1.0;
            rec.samples_per_sec = static_cast<double>(n);
        } else {
            rec.epoch_seconds = wall > 0.0 ? wall : std::numeric_limits<double>::min();
            rec.samples_per_sec = static_cast<double>(n) / rec.epoch_seconds;
        }
        result.records.push_back(rec);
        result.loss_history.push_back(train_loss);
        result.total_seconds += rec.epoch_seconds;

        if (should_stop(result.loss_history, job.stop)) break;
    }

    result.model = group.take_model();
    result.final_val_loss = result.records.back().val_loss;
    result.best_val_loss = result.records[0].val_loss;
    for (const auto& r : result.records)
        result.best_val_loss = std::min(result.best_val_loss, r.val_loss);
    return result;
}

}  // namespace mrmf
