#pragma once

#include <barrier>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mrmf/dataset.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/model.hpp"
#include "mrmf/optimizer.hpp"
#include "mrmf/tensor.hpp"

namespace mrmf {

// ---------------------------------------------------------------------------
// Worker allocation
// ---------------------------------------------------------------------------

struct AllocationInput {
    double dense_seconds = 0.0;   // estimated dense-model training time
    double coarse_seconds = 0.0;  // estimated coarse-model training time
    std::size_t total_workers = 0;
};

// Splits a worker budget proportionally to the estimated training times:
// round-half-up of W * t_d / (t_d + t_c), clamped so both groups keep at
// least one worker. With granularity g > 1, the dense group is rounded to a
// multiple of g instead (W must then be a multiple of g).
inline std::pair<std::size_t, std::size_t> allocate_workers(const AllocationInput& in,
                                                            std::size_t granularity = 1) {
    if (!(in.dense_seconds > 0.0) || !(in.coarse_seconds > 0.0))
        throw ConfigError("allocate_workers: time estimates must be > 0");
    if (in.total_workers < 2) throw ConfigError("allocate_workers: need at least 2 workers");
    if (granularity < 1) throw ConfigError("allocate_workers: granularity must be >= 1");
    if (in.total_workers % granularity != 0)
        throw ConfigError("allocate_workers: worker count must be a multiple of the granularity");

    const double ratio = in.dense_seconds / (in.dense_seconds + in.coarse_seconds);
    const double units = static_cast<double>(in.total_workers) / static_cast<double>(granularity);
    std::size_t dense_units = static_cast<std::size_t>(std::floor(units * ratio + 0.5));
    const std::size_t total_units = in.total_workers / granularity;
    if (dense_units < 1) dense_units = 1;
    if (dense_units > total_units - 1) dense_units = total_units - 1;
    const std::size_t dense = dense_units * granularity;
    return {dense, in.total_workers - dense};
}

// ---------------------------------------------------------------------------
// Sharding and checksums
// ---------------------------------------------------------------------------

struct ShardRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

// Contiguous shards in worker order, sizes differing by at most one; the
// remainder lands on the trailing shards so leftover samples are trained on
// rather than dropped.
inline std::vector<ShardRange> shard_batch(std::size_t batch, std::size_t workers) {
    std::vector<ShardRange> shards(workers);
    const std::size_t base = batch / workers;
    const std::size_t rem = batch % workers;
    std::size_t at = 0;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t size = base + (w >= workers - rem ? 1 : 0);
        shards[w] = {at, at + size};
        at += size;
    }
    return shards;
}

// FNV-1a over the little-endian bytes of every parameter and state tensor.
inline std::uint64_t model_checksum(const Model& m) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const Tensor& t) {
        for (double v : t.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xFF;
                h *= 1099511628211ull;
            }
        }
    };
    for (const auto& lp : m.params)
        for (const Tensor& t : lp.tensors) mix(t);
    for (const auto& ls : m.state)
        for (const Tensor& t : ls.tensors) mix(t);
    return h;
}

struct ParallelStepResult {
    double loss = 0.0;  // batch-mean training loss
    std::vector<std::uint64_t> checksums;
};

// ---------------------------------------------------------------------------
// Worker group
// ---------------------------------------------------------------------------

// Simulated synchronous-SGD data parallelism. Each worker thread owns a model
// replica and an optimizer replica. Per step: the batch is sharded
// contiguously, every worker computes its shard's contribution to the
// full-batch mean gradient, the controller reduces the contributions in
// ascending worker order, and every replica applies the identical update.
// Batch-norm statistics are synchronized across shards (per-channel sums are
// reduced in ascending worker order at each batch-norm layer), so the
// combined gradient is the exact full-batch gradient regardless of W, and
// W = 1 reproduces the single-threaded engine path bit for bit.
class WorkerGroup {
  public:
    WorkerGroup(const Model& initial, const OptimizerConfig& optimizer, std::size_t workers,
                bool test_identical_shards = false)
        : worker_count_(workers),
          identical_shards_(test_identical_shards),
          gate_(static_cast<std::ptrdiff_t>(workers + 1)) {
        if (workers < 1) throw ConfigError("worker group: need at least 1 worker");

        // Per batch-norm layer: index, channel count, and spatial positions
        // per sample (how many elements feed each channel's statistics).
        Shape cur = initial.input_shape;
        for (std::size_t i = 0; i < initial.layers.size(); ++i) {
            if (initial.layers[i].kind == LayerKind::batch_norm)
                bn_layers_.push_back({i, cur.back(), shape_numel(cur) / cur.back()});
            cur = layer_output_shape(initial.layers[i], cur);
        }

        slots_.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) slots_.emplace_back(initial, optimizer);
        bn_post_.assign(workers, {});
        threads_.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            threads_.emplace_back([this, w] { worker_loop(w); });
    }

    WorkerGroup(const WorkerGroup&) = delete;
    WorkerGroup& operator=(const WorkerGroup&) = delete;

    ~WorkerGroup() {
        shutdown_ = true;
        gate_.arrive_and_wait();
        for (auto& t : threads_) t.join();
    }

    std::size_t worker_count() const { return worker_count_; }

    // Replicas are identical after every step; replica 0 is the canonical one.
    const Model& model() const { return slots_[0].model; }
    Model take_model() const { return slots_[0].model; }

    ParallelStepResult step(const Batch& batch) {
        // Shape problems must surface here, on the controller thread: a
        // worker that threw mid-computation would miss its barrier arrivals.
        const Model& m = slots_[0].model;
        if (batch.inputs.shape.empty() || batch.inputs.shape[0] == 0 ||
            batch.targets.shape.size() != 2 || batch.targets.shape[0] != batch.inputs.shape[0])
            throw ShapeError("parallel step: malformed batch");
        if (Shape(batch.inputs.shape.begin() + 1, batch.inputs.shape.end()) != m.input_shape)
            throw ShapeError("parallel step: batch sample shape does not match model input " +
                             shape_to_string(m.input_shape));
        if (Shape{batch.targets.shape[1]} != m.output_shape)
            throw ShapeError("parallel step: target width does not match model output " +
                             shape_to_string(m.output_shape));

        batch_ = &batch;
        const std::size_t n = batch.inputs.shape[0];
        if (identical_shards_) {
            shards_.assign(worker_count_, ShardRange{0, n});
            global_n_ = n * worker_count_;
        } else {
            shards_ = shard_batch(n, worker_count_);
            global_n_ = n;
        }
        label_len_ = batch.targets.shape[1];
        abort_ = false;

        gate_.arrive_and_wait();  // workers start computing

        // Mirror the workers' batch-norm barrier crossings, reducing between
        // the post and read phases of each.
        for (const BnLayer& bn : bn_layers_) {
            const double count = static_cast<double>(global_n_) * static_cast<double>(bn.positions);
            reduce_crossing(bn.channels, count);  // mean
            reduce_crossing(bn.channels, count);  // variance
        }
        for (std::size_t k = bn_layers_.size(); k-- > 0;)
            reduce_crossing(2 * bn_layers_[k].channels, 0.0);  // raw backward sums

        gate_.arrive_and_wait();  // gradients posted
        reduce_gradients();
        gate_.arrive_and_wait();  // workers apply the update
        gate_.arrive_and_wait();  // checksums posted

        for (auto& slot : slots_)
            if (slot.error) {
                std::exception_ptr e = slot.error;
                slot.error = nullptr;
                std::rethrow_exception(e);
            }
        if (abort_)
            throw TrainError("parallel step: non-finite loss or gradient, aborting");

        ParallelStepResult result;
        result.checksums.reserve(worker_count_);
        for (const auto& slot : slots_) result.checksums.push_back(slot.checksum);
        for (std::size_t w = 1; w < worker_count_; ++w)
            if (result.checksums[w] != result.checksums[0])
                throw TrainError("parallel step: replica " + std::to_string(w) +
                                 " diverged (checksum mismatch)");

        double sse = 0.0;
        for (const auto& slot : slots_) sse += slot.partial_sse;
        result.loss = sse / (static_cast<double>(global_n_) * static_cast<double>(label_len_));
        if (!std::isfinite(result.loss))
            throw TrainError("parallel step: non-finite loss, aborting");
        return result;
    }

  private:
    struct Slot {
        Model model;
        Optimizer optimizer;
        ModelGrads partial;
        double partial_sse = 0.0;
        std::uint64_t checksum = 0;
        std::exception_ptr error;

        Slot(const Model& m, const OptimizerConfig& opt) : model(m), optimizer(opt) {}
    };

    struct BnLayer {
        std::size_t layer = 0;
        std::size_t channels = 0;
        std::size_t positions = 0;  // spatial positions per sample at this layer
    };

    // Controller half of one synchronization crossing: wait for the workers'
    // partials, reduce them in ascending worker order, optionally divide by
    // `count` (0 = broadcast raw sums), release.
    void reduce_crossing(std::size_t width, double count) {
        gate_.arrive_and_wait();
        bn_out_.assign(width, 0.0);
        for (std::size_t w = 0; w < worker_count_; ++w)
            for (std::size_t i = 0; i < width; ++i) bn_out_[i] += bn_post_[w][i];
        if (count > 0.0)
            for (double& v : bn_out_) v /= count;
        gate_.arrive_and_wait();
    }

    void reduce_gradients() {
        combined_ = zero_grads_like(slots_[0].model);
        for (std::size_t w = 0; w < worker_count_; ++w) {
            const ModelGrads& g = slots_[w].partial;
            for (std::size_t i = 0; i < combined_.params.size(); ++i)
                for (std::size_t j = 0; j < combined_.params[i].tensors.size(); ++j) {
                    Tensor& acc = combined_.params[i].tensors[j];
                    const Tensor& p = g.params[i].tensors[j];
                    for (std::size_t e = 0; e < acc.numel(); ++e) acc.data[e] += p.data[e];
                }
        }
        for (const auto& lp : combined_.params)
            for (const Tensor& t : lp.tensors)
                for (double v : t.data)
                    if (!std::isfinite(v)) {
                        abort_ = true;
                        return;
                    }
        double sse = 0.0;
        for (const auto& slot : slots_) sse += slot.partial_sse;
        if (!std::isfinite(sse)) abort_ = true;
    }

    // Worker half of one crossing.
    const std::vector<double>& exchange(std::size_t w, std::vector<double> partial) {
        bn_post_[w] = std::move(partial);
        gate_.arrive_and_wait();
        gate_.arrive_and_wait();
        return bn_out_;
    }

    void worker_loop(std::size_t w) {
        for (;;) {
            gate_.arrive_and_wait();  // step start or shutdown
            if (shutdown_) return;
            try {
                worker_compute(w);
            } catch (...) {
                slots_[w].error = std::current_exception();
            }
            gate_.arrive_and_wait();  // gradients posted
            gate_.arrive_and_wait();  // combined gradients ready
            try {
                if (!abort_ && !slots_[w].error) {
                    slots_[w].optimizer.step(slots_[w].model, combined_);
                    slots_[w].checksum = model_checksum(slots_[w].model);
                } else {
                    slots_[w].checksum = 0;
                }
            } catch (...) {
                slots_[w].error = std::current_exception();
            }
            gate_.arrive_and_wait();  // checksums posted
        }
    }

    void worker_compute(std::size_t w) {
        Slot& slot = slots_[w];
        Model& m = slot.model;
        const ShardRange shard = shards_[w];
        const std::size_t n_shard = shard.size();

        slot.partial = zero_grads_like(m);
        slot.partial_sse = 0.0;

        // Empty shard: no samples locally, but the worker still takes part in
        // every synchronization crossing (with zero contributions) and keeps
        // its batch-norm running stats in step with the other replicas.
        if (n_shard == 0) {
            for (const BnLayer& bn : bn_layers_) {
                const std::vector<double> mean = exchange(w, std::vector<double>(bn.channels, 0.0));
                const std::vector<double> var = exchange(w, std::vector<double>(bn.channels, 0.0));
                update_running_stats(m, bn.layer, mean, var);
            }
            for (std::size_t k = bn_layers_.size(); k-- > 0;)
                exchange(w, std::vector<double>(2 * bn_layers_[k].channels, 0.0));
            return;
        }

        const Batch shard_batch = slice_batch(*batch_, shard);

        // Forward with synchronized batch-norm statistics.
        std::vector<Tensor> acts;
        std::vector<BatchNormCache> bn_caches(m.layers.size());
        acts.reserve(m.layers.size() + 1);
        acts.push_back(shard_batch.inputs);
        Tensor cur = shard_batch.inputs;
        for (std::size_t i = 0; i < m.layers.size(); ++i) {
            const LayerSpec& s = m.layers[i];
            switch (s.kind) {
                case LayerKind::conv:
                    cur = conv_forward(s, m.params[i].tensors[0], m.params[i].tensors[1], cur);
                    break;
                case LayerKind::avg_pool:
                    cur = avg_pool_forward(s, cur);
                    break;
                case LayerKind::batch_norm:
                    cur = bn_forward_sync(w, m, i, cur, bn_caches[i]);
                    break;
                case LayerKind::relu:
                    cur = relu_forward(cur);
                    break;
                case LayerKind::tanh:
                    cur = tanh_forward(cur);
                    break;
                case LayerKind::flatten:
                    cur = flatten_forward(cur);
                    break;
                case LayerKind::fully_connected:
                    cur = fc_forward(s, m.params[i].tensors[0], m.params[i].tensors[1], cur);
                    break;
            }
            acts.push_back(cur);
        }

        // Loss gradient scaled for the global batch, so per-worker parameter
        // gradients are already the worker's share of the full-batch mean
        // gradient and the reduction is a plain ordered sum.
        const Tensor& pred = acts.back();
        const Tensor& target = shard_batch.targets;
        Tensor grad = Tensor::zeros(pred.shape);
        const double scale =
            2.0 / (static_cast<double>(global_n_) * static_cast<double>(label_len_));
        for (std::size_t i = 0; i < pred.numel(); ++i) {
            const double d = pred.data[i] - target.data[i];
            slot.partial_sse += d * d;
            grad.data[i] = scale * d;
        }

        // Backward, mirroring the engine kernels with synchronized batch-norm
        // reductions.
        for (std::size_t i = m.layers.size(); i-- > 0;) {
            const LayerSpec& s = m.layers[i];
            const Tensor& in = acts[i];
            switch (s.kind) {
                case LayerKind::conv: {
                    ConvGrads cg = conv_backward(s, m.params[i].tensors[0], in, grad);
                    slot.partial.params[i].tensors[0] = std::move(cg.dweight);
                    slot.partial.params[i].tensors[1] = std::move(cg.dbias);
                    grad = std::move(cg.dinput);
                    break;
                }
                case LayerKind::avg_pool:
                    grad = avg_pool_backward(s, in.shape, grad);
                    break;
                case LayerKind::batch_norm:
                    grad = bn_backward_sync(w, m, i, in, bn_caches[i], grad,
                                            slot.partial.params[i].tensors[0],
                                            slot.partial.params[i].tensors[1]);
                    break;
                case LayerKind::relu:
                    grad = relu_backward(in, grad);
                    break;
                case LayerKind::tanh:
                    grad = tanh_backward(acts[i + 1], grad);
                    break;
                case LayerKind::flatten:
                    grad = flatten_backward(in.shape, grad);
                    break;
                case LayerKind::fully_connected: {
                    FcGrads fg = fc_backward(s, m.params[i].tensors[0], in, grad);
                    slot.partial.params[i].tensors[0] = std::move(fg.dweight);
                    slot.partial.params[i].tensors[1] = std::move(fg.dbias);
                    grad = std::move(fg.dinput);
                    break;
                }
            }
        }
    }

    Tensor bn_forward_sync(std::size_t w, Model& m, std::size_t li, const Tensor& in,
                           BatchNormCache& cache) {
        const std::size_t c = in.shape.back();
        const std::size_t total = in.numel();

        std::vector<double> sum(c, 0.0);
        for (std::size_t i = 0; i < total; ++i) sum[i % c] += in.data[i];
        const std::vector<double> mean = exchange(w, std::move(sum));

        std::vector<double> sq(c, 0.0);
        for (std::size_t i = 0; i < total; ++i) {
            const double d = in.data[i] - mean[i % c];
            sq[i % c] += d * d;
        }
        const std::vector<double> var = exchange(w, std::move(sq));

        cache.mean = Tensor::zeros({c});
        cache.inv_std = Tensor::zeros({c});
        for (std::size_t ci = 0; ci < c; ++ci) {
            cache.mean.data[ci] = mean[ci];
            cache.inv_std.data[ci] = 1.0 / std::sqrt(var[ci] + kBnEps);
        }
        update_running_stats(m, li, mean, var);

        const Tensor& gamma = m.params[li].tensors[0];
        const Tensor& beta = m.params[li].tensors[1];
        Tensor out = Tensor::zeros(in.shape);
        for (std::size_t i = 0; i < total; ++i) {
            const std::size_t ci = i % c;
            out.data[i] =
                gamma.data[ci] * (in.data[i] - cache.mean.data[ci]) * cache.inv_std.data[ci] +
                beta.data[ci];
        }
        return out;
    }

    void update_running_stats(Model& m, std::size_t li, const std::vector<double>& mean,
                              const std::vector<double>& var) {
        Tensor& rm = m.state[li].tensors[0];
        Tensor& rv = m.state[li].tensors[1];
        for (std::size_t ci = 0; ci < mean.size(); ++ci) {
            rm.data[ci] = (1.0 - kBnMomentum) * rm.data[ci] + kBnMomentum * mean[ci];
            rv.data[ci] = (1.0 - kBnMomentum) * rv.data[ci] + kBnMomentum * var[ci];
        }
    }

    Tensor bn_backward_sync(std::size_t w, const Model& m, std::size_t li, const Tensor& in,
                            const BatchNormCache& cache, const Tensor& dout, Tensor& dgamma_out,
                            Tensor& dbeta_out) {
        const std::size_t c = in.shape.back();
        const std::size_t total = in.numel();
        std::size_t positions = 1;
        for (const BnLayer& bn : bn_layers_)
            if (bn.layer == li) positions = bn.positions;
        const double n = static_cast<double>(global_n_) * static_cast<double>(positions);

        // Local sums double as this worker's gamma/beta gradient share.
        std::vector<double> sums(2 * c, 0.0);  // [dbeta | dgamma]
        for (std::size_t i = 0; i < total; ++i) {
            const std::size_t ci = i % c;
            const double xhat = (in.data[i] - cache.mean.data[ci]) * cache.inv_std.data[ci];
            sums[ci] += dout.data[i];
            sums[c + ci] += dout.data[i] * xhat;
        }
        dgamma_out = Tensor::zeros({c});
        dbeta_out = Tensor::zeros({c});
        for (std::size_t ci = 0; ci < c; ++ci) {
            dbeta_out.data[ci] = sums[ci];
            dgamma_out.data[ci] = sums[c + ci];
        }
        const std::vector<double> global = exchange(w, std::move(sums));

        const Tensor& gamma = m.params[li].tensors[0];
        Tensor din = Tensor::zeros(in.shape);
        for (std::size_t i = 0; i < total; ++i) {
            const std::size_t ci = i % c;
            const double xhat = (in.data[i] - cache.mean.data[ci]) * cache.inv_std.data[ci];
            din.data[i] = gamma.data[ci] * cache.inv_std.data[ci] *
                          (dout.data[i] - global[ci] / n - xhat * global[c + ci] / n);
        }
        return din;
    }

    static Batch slice_batch(const Batch& full, ShardRange r) {
        const std::size_t sample_elems = full.inputs.numel() / full.inputs.shape[0];
        const std::size_t m = full.targets.shape[1];
        Shape in_shape = full.inputs.shape;
        in_shape[0] = r.size();
        Batch out{Tensor::zeros(in_shape), Tensor::zeros({r.size(), m})};
        std::copy(full.inputs.data.begin() + r.begin * sample_elems,
                  full.inputs.data.begin() + r.end * sample_elems, out.inputs.data.begin());
        std::copy(full.targets.data.begin() + r.begin * m, full.targets.data.begin() + r.end * m,
                  out.targets.data.begin());
        return out;
    }

    std::size_t worker_count_;
    bool identical_shards_;
    std::barrier<> gate_;
    std::vector<Slot> slots_;
    std::vector<std::thread> threads_;
    std::vector<BnLayer> bn_layers_;

    const Batch* batch_ = nullptr;
    std::vector<ShardRange> shards_;
    std::size_t global_n_ = 0;
    std::size_t label_len_ = 1;
    std::vector<std::vector<double>> bn_post_;
    std::vector<double> bn_out_;
    ModelGrads combined_;
    bool abort_ = false;
    bool shutdown_ = false;
};

}  // namespace mrmf
