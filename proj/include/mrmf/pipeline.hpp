#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mrmf/checkpoint.hpp"
#include "mrmf/concurrent.hpp"
#include "mrmf/dataset.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/fusion.hpp"
#include "mrmf/metrics.hpp"
#include "mrmf/model.hpp"
#include "mrmf/parallel.hpp"
#include "mrmf/stop.hpp"
#include "mrmf/train.hpp"

namespace mrmf {

// One fusion stage: pretrain a coarse and a dense model at two resolutions,
// then fuse them.
struct StagePlan {
    ResolutionFactors coarse_factors;
    ResolutionFactors dense_factors;
    StopCondition coarse_stop;
    StopCondition dense_stop;
    std::size_t coarse_batch = 16;
    std::size_t dense_batch = 16;
    OptimizerConfig coarse_opt;
    OptimizerConfig dense_opt;
};

struct PipelineSpec {
    std::vector<LayerSpec> architecture;  // at original resolution
    std::vector<StagePlan> stages;        // empty = baseline training
    StopCondition finetune_stop;
    OptimizerConfig finetune_opt;
    std::size_t finetune_batch = 16;
};

struct PipelineOptions {
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    // Concurrent intra-stage mode: split `workers` between the dense and
    // coarse trainings. Positive time estimates are used directly; otherwise
    // each phase is calibrated with a one-epoch run scaled by its epoch cap.
    bool concurrent = false;
    double dense_seconds_estimate = 0.0;
    double coarse_seconds_estimate = 0.0;
    std::size_t worker_granularity = 1;

    FuseOptions fuse_options;
    bool deterministic_timing = false;
    std::string out_dir;  // empty = no checkpoints written
};

struct StageReport {
    std::size_t stage = 0;
    std::size_t coarse_epochs = 0;
    std::size_t dense_epochs = 0;
    double coarse_final_train_loss = 0.0;
    double coarse_final_val_loss = 0.0;
    double dense_final_train_loss = 0.0;
    double dense_final_val_loss = 0.0;
    double coarse_seconds = 0.0;
    double dense_seconds = 0.0;
    std::string checkpoint_path;
};

struct PipelineResult {
    Model model;
    std::vector<MetricsRecord> records;
    std::vector<StageReport> stages;
    std::size_t finetune_epochs = 0;
    double finetune_seconds = 0.0;
    double total_seconds = 0.0;
    double final_val_loss = 0.0;  // at original resolution
    double best_val_loss = 0.0;
    std::string final_checkpoint_path;
};

// Seed derivation tags: every phase of every stage draws from an independent
// stream derived from the master seed.
namespace seed_tag {
inline constexpr std::uint64_t coarse_init = 1;
inline constexpr std::uint64_t dense_init = 2;
inline constexpr std::uint64_t coarse_shuffle = 3;
inline constexpr std::uint64_t dense_shuffle = 4;
inline constexpr std::uint64_t finetune_init = 5;
inline constexpr std::uint64_t finetune_shuffle = 6;
inline constexpr std::uint64_t fuse_reinit = 7;
}  // namespace seed_tag

// Materializes each reduced resolution of the train/val datasets once and
// caches it; identity factors alias the originals.
class ResolutionCache {
  public:
    ResolutionCache(const Dataset& train, const Dataset& val) : train_(train), val_(val) {}

    const Dataset& train(const ResolutionFactors& f) { return get(train_, train_cache_, f); }
    const Dataset& val(const ResolutionFactors& f) { return get(val_, val_cache_, f); }

  private:
    const Dataset& get(const Dataset& original, std::map<std::vector<std::size_t>, Dataset>& cache,
                       const ResolutionFactors& f) {
        if (f.is_identity()) return original;
        auto it = cache.find(f.k);
        if (it == cache.end()) it = cache.emplace(f.k, downsample_dataset(original, f)).first;
        return it->second;
    }

    const Dataset& train_;
    const Dataset& val_;
    std::map<std::vector<std::size_t>, Dataset> train_cache_;
    std::map<std::vector<std::size_t>, Dataset> val_cache_;
};

inline Shape reduced_shape(const Shape& sample, const ResolutionFactors& f) {
    validate_factors(f, sample);
    Shape out = sample;
    for (std::size_t d = 0; d + 1 < out.size(); ++d) out[d] /= f.k[d];
    return out;
}

inline void validate_schedule(const std::vector<StagePlan>& stages, const Shape& sample_shape) {
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const StagePlan& p = stages[s];
        const std::string where = "stage " + std::to_string(s + 1) + ": ";
        validate_factors(p.coarse_factors, sample_shape);
        validate_factors(p.dense_factors, sample_shape);
        if (p.coarse_factors.product() <= p.dense_factors.product())
            throw ConfigError(where + "coarse resolution (" + factors_to_string(p.coarse_factors) +
                              ") must be strictly coarser than dense (" +
                              factors_to_string(p.dense_factors) + ")");
        if (p.coarse_batch < 1 || p.dense_batch < 1)
            throw ConfigError(where + "batch sizes must be >= 1");
        validate_stop_condition_lenient(p.coarse_stop);
        validate_stop_condition_lenient(p.dense_stop);
        validate_optimizer_config(p.coarse_opt);
        validate_optimizer_config(p.dense_opt);
        if (s + 1 < stages.size() && !(stages[s + 1].coarse_factors == p.dense_factors))
            throw ConfigError("stage " + std::to_string(s + 2) +
                              ": coarse factors must equal stage " + std::to_string(s + 1) +
                              "'s dense factors; re-adjusting a carried model is not supported");
    }
    if (!stages.empty() && !stages.back().dense_factors.is_identity())
        throw ConfigError("last stage must train its dense model at the original resolution "
                          "(all factors 1)");
}

struct StageOutcome {
    Model fused;
    StageReport report;
    std::vector<MetricsRecord> records;
};

namespace detail {

inline std::pair<std::size_t, std::size_t> stage_worker_split(const TrainJob& coarse_job,
                                                              const TrainJob& dense_job,
                                                              const StagePlan& plan,
                                                              const PipelineOptions& options) {
    double t_d = options.dense_seconds_estimate;
    double t_c = options.coarse_seconds_estimate;
    if (!(t_d > 0.0) || !(t_c > 0.0)) {
        // One-epoch calibration per resolution, scaled by each phase's epoch
        // cap. Wall-clock based, so the resulting split is hardware
        // dependent; supply explicit estimates for reproducible runs.
        auto one_epoch_seconds = [](const TrainJob& proto) {
            TrainJob probe = proto;
            probe.stop = StopCondition{1.0, 1, 1};
            probe.deterministic_timing = false;
            const auto t0 = std::chrono::steady_clock::now();
            train_until_stop(probe);
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        };
        t_c = one_epoch_seconds(coarse_job) * static_cast<double>(plan.coarse_stop.max_epochs);
        t_d = one_epoch_seconds(dense_job) * static_cast<double>(plan.dense_stop.max_epochs);
    }
    const auto [dense_workers, coarse_workers] = allocate_workers(
        AllocationInput{t_d, t_c, options.workers}, options.worker_granularity);
    return {coarse_workers, dense_workers};
}

}  // namespace detail

// Trains the coarse model on coarse-factor data and a freshly initialized
// dense model on dense-factor data (sequentially or concurrently), fuses
// them, and probes the fused model with one dense-resolution batch.
inline StageOutcome run_fusion_stage(Model coarse_model, const StagePlan& plan,
                                     const Model& reference, ResolutionCache& data,
                                     std::size_t stage_index, const PipelineOptions& options) {
    const Shape coarse_shape = reduced_shape(reference.input_shape, plan.coarse_factors);
    const Shape dense_shape = reduced_shape(reference.input_shape, plan.dense_factors);
    if (coarse_model.input_shape != coarse_shape)
        throw FusionError("stage " + std::to_string(stage_index) + ": coarse model expects " +
                          shape_to_string(coarse_model.input_shape) + " but the plan produces " +
                          shape_to_string(coarse_shape));

    TrainJob coarse_job;
    coarse_job.model = std::move(coarse_model);
    coarse_job.train = &data.train(plan.coarse_factors);
    coarse_job.val = &data.val(plan.coarse_factors);
    coarse_job.stop = plan.coarse_stop;
    coarse_job.optimizer = plan.coarse_opt;
    coarse_job.batch_size = plan.coarse_batch;
    coarse_job.shuffle_seed = derive_seed(options.seed, seed_tag::coarse_shuffle, stage_index);
    coarse_job.workers = options.workers;
    coarse_job.stage = stage_index;
    coarse_job.phase = Phase::coarse;
    coarse_job.deterministic_timing = options.deterministic_timing;

    Rng dense_init_rng(derive_seed(options.seed, seed_tag::dense_init, stage_index));
    TrainJob dense_job;
    dense_job.model = adjust_model(reference, dense_shape, &dense_init_rng);
    dense_job.train = &data.train(plan.dense_factors);
    dense_job.val = &data.val(plan.dense_factors);
    dense_job.stop = plan.dense_stop;
    dense_job.optimizer = plan.dense_opt;
    dense_job.batch_size = plan.dense_batch;
    dense_job.shuffle_seed = derive_seed(options.seed, seed_tag::dense_shuffle, stage_index);
    dense_job.workers = options.workers;
    dense_job.stage = stage_index;
    dense_job.phase = Phase::dense;
    dense_job.deterministic_timing = options.deterministic_timing;

    TrainResult coarse_result;
    TrainResult dense_result;
    if (options.concurrent && options.workers >= 2) {
        const auto [coarse_workers, dense_workers] =
            detail::stage_worker_split(coarse_job, dense_job, plan, options);
        coarse_job.workers = coarse_workers;
        dense_job.workers = dense_workers;
        ConcurrentStageResult r = concurrent_stage(coarse_job, dense_job);
        coarse_result = std::move(r.coarse);
        dense_result = std::move(r.dense);
    } else {
        coarse_result = train_until_stop(coarse_job);
        dense_result = train_until_stop(dense_job);
    }

    StageOutcome outcome;
    FuseOptions fuse_options = options.fuse_options;
    fuse_options.reinit_seed = derive_seed(options.seed, seed_tag::fuse_reinit, stage_index);
    outcome.fused = fuse(coarse_result.model, dense_result.model, fuse_options);

    // Forward probe: the fused model must accept dense-resolution input.
    const Batch probe = make_batch(data.train(plan.dense_factors), {0});
    model_forward(outcome.fused, probe.inputs);

    outcome.report.stage = stage_index;
    outcome.report.coarse_epochs = coarse_result.records.size();
    outcome.report.dense_epochs = dense_result.records.size();
    outcome.report.coarse_final_train_loss = coarse_result.loss_history.back();
    outcome.report.coarse_final_val_loss = coarse_result.final_val_loss;
    outcome.report.dense_final_train_loss = dense_result.loss_history.back();
    outcome.report.dense_final_val_loss = dense_result.final_val_loss;
    outcome.report.coarse_seconds = coarse_result.total_seconds;
    outcome.report.dense_seconds = dense_result.total_seconds;
    if (!options.out_dir.empty()) {
        outcome.report.checkpoint_path =
            options.out_dir + "/stage" + std::to_string(stage_index) + "_fused.mrc";
        save_checkpoint(outcome.fused, outcome.report.checkpoint_path);
    }

    outcome.records = std::move(coarse_result.records);
    outcome.records.insert(outcome.records.end(), dense_result.records.begin(),
                           dense_result.records.end());
    return outcome;
}

// Executes all fusion stages in order, carrying each fused model as the next
// stage's coarse model, then finetunes at the original resolution. An empty
// stage list degenerates to baseline training on the original data.
inline PipelineResult run_pipeline(const PipelineSpec& spec, const Dataset& train,
                                   const Dataset& val, const PipelineOptions& options) {
    validate_dataset(train);
    validate_dataset(val);
    if (train.sample_shape() != val.sample_shape() || train.label_length() != val.label_length())
        throw ConfigError("pipeline: train and validation sets disagree on shapes");
    validate_schedule(spec.stages, train.sample_shape());
    validate_stop_condition_lenient(spec.finetune_stop);
    validate_optimizer_config(spec.finetune_opt);
    if (spec.finetune_batch < 1) throw ConfigError("pipeline: finetune batch size must be >= 1");

    const Model reference = make_model(train.sample_shape(), spec.architecture);
    ResolutionCache data(train, val);
    PipelineResult result;

    Model carried;
    bool have_carried = false;
    for (std::size_t s = 0; s < spec.stages.size(); ++s) {
        const std::size_t stage_index = s + 1;
        const StagePlan& plan = spec.stages[s];
        Model coarse;
        if (have_carried) {
            coarse = std::move(carried);
        } else {
            Rng init_rng(derive_seed(options.seed, seed_tag::coarse_init, stage_index));
            coarse = adjust_model(reference, reduced_shape(train.sample_shape(), plan.coarse_factors),
                                  &init_rng);
        }
        StageOutcome outcome =
            run_fusion_stage(std::move(coarse), plan, reference, data, stage_index, options);
        carried = std::move(outcome.fused);
        have_carried = true;
        result.stages.push_back(std::move(outcome.report));
        result.records.insert(result.records.end(), outcome.records.begin(), outcome.records.end());
    }

    TrainJob finetune;
    if (have_carried) {
        finetune.model = std::move(carried);
        if (finetune.model.input_shape != train.sample_shape())
            throw FusionError("pipeline: fused model resolution " +
                              shape_to_string(finetune.model.input_shape) +
                              " does not match the original data");
    } else {
        finetune.model = reference;
        Rng init_rng(derive_seed(options.seed, seed_tag::finetune_init, 0));
        init_params(finetune.model, init_rng);
    }
    finetune.train = &train;
    finetune.val = &val;
    finetune.stop = spec.finetune_stop;
    finetune.optimizer = spec.finetune_opt;
    finetune.batch_size = spec.finetune_batch;
    finetune.shuffle_seed = derive_seed(options.seed, seed_tag::finetune_shuffle, 0);
    finetune.workers = options.workers;
    finetune.stage = spec.stages.size() + 1;
    finetune.phase = Phase::finetune;
    finetune.deterministic_timing = options.deterministic_timing;

    TrainResult ft = train_until_stop(finetune);
    result.model = std::move(ft.model);
    result.records.insert(result.records.end(), ft.records.begin(), ft.records.end());
    result.finetune_epochs = ft.records.size();
    result.finetune_seconds = ft.total_seconds;
    result.final_val_loss = ft.final_val_loss;
    result.best_val_loss = ft.best_val_loss;
    result.total_seconds = 0.0;
    for (const auto& r : result.records) result.total_seconds += r.epoch_seconds;
    if (!options.out_dir.empty()) {
        result.final_checkpoint_path = options.out_dir + "/final.mrc";
        save_checkpoint(result.model, result.final_checkpoint_path);
    }
    return result;
}

}  // namespace mrmf
