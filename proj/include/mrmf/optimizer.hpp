#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mrmf/errors.hpp"
#include "mrmf/model.hpp"
#include "mrmf/tensor.hpp"

namespace mrmf {

enum class OptimizerKind : std::uint8_t { sgd = 0, adam = 1 };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 0.01;
    double momentum = 0.0;  // sgd
    double beta1 = 0.9;     // adam
    double beta2 = 0.999;   // adam
    double eps = 1e-8;      // adam

    bool operator==(const OptimizerConfig&) const = default;
};

inline void validate_optimizer_config(const OptimizerConfig& c) {
    if (!(c.learning_rate > 0.0)) throw ConfigError("optimizer: learning_rate must be > 0");
    if (c.momentum < 0.0 || c.momentum >= 1.0)
        throw ConfigError("optimizer: momentum must be in [0, 1)");
    if (c.beta1 < 0.0 || c.beta1 >= 1.0 || c.beta2 < 0.0 || c.beta2 >= 1.0)
        throw ConfigError("optimizer: betas must be in [0, 1)");
    if (!(c.eps > 0.0)) throw ConfigError("optimizer: eps must be > 0");
}

// Parameter updates are applied in a fixed order (layers ascending, tensors in
// layer order, flat element order), so two optimizers fed bitwise-identical
// gradients produce bitwise-identical parameters.
class Optimizer {
  public:
    explicit Optimizer(OptimizerConfig config) : config_(config) {
        validate_optimizer_config(config_);
    }

    const OptimizerConfig& config() const { return config_; }
    std::uint64_t steps_taken() const { return step_; }

    void step(Model& model, const ModelGrads& grads) {
        if (grads.params.size() != model.params.size())
            throw TrainError("optimizer: gradient layout does not match model");
        ensure_state(model);

        for (const auto& lp : grads.params)
            for (const auto& t : lp.tensors)
                for (double v : t.data)
                    if (!std::isfinite(v))
                        throw TrainError("optimizer: non-finite gradient, refusing update");

        ++step_;
        std::size_t slot = 0;
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            for (std::size_t j = 0; j < model.params[i].tensors.size(); ++j, ++slot) {
                Tensor& p = model.params[i].tensors[j];
                const Tensor& g = grads.params[i].tensors[j];
                if (!same_shape(p, g))
                    throw TrainError("optimizer: gradient shape mismatch at layer " +
                                     std::to_string(i));
                if (config_.kind == OptimizerKind::sgd)
                    step_sgd(p, g, slot);
                else
                    step_adam(p, g, slot);
            }
        }
        ++model.version;
    }

  private:
    void ensure_state(const Model& model) {
        std::size_t slots = 0;
        for (const auto& lp : model.params) slots += lp.tensors.size();
        if (!state_.empty()) {
            if (state_.size() != slots)
                throw TrainError("optimizer: reused across models with different layouts");
            return;
        }
        state_.reserve(slots);
        for (const auto& lp : model.params)
            for (const auto& t : lp.tensors) {
                Slot s;
                s.first = Tensor::zeros(t.shape);
                if (config_.kind == OptimizerKind::adam) s.second = Tensor::zeros(t.shape);
                state_.push_back(std::move(s));
            }
    }

    void step_sgd(Tensor& p, const Tensor& g, std::size_t slot) {
        Tensor& vel = state_[slot].first;
        const double lr = config_.learning_rate;
        const double mu = config_.momentum;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            vel.data[i] = mu * vel.data[i] + g.data[i];
            p.data[i] -= lr * vel.data[i];
        }
    }

    void step_adam(Tensor& p, const Tensor& g, std::size_t slot) {
        Tensor& m = state_[slot].first;
        Tensor& v = state_[slot].second;
        const double b1 = config_.beta1;
        const double b2 = config_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
        const double lr = config_.learning_rate;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * g.data[i];
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / c1;
            const double vhat = v.data[i] / c2;
            p.data[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }

    struct Slot {
        Tensor first;
        Tensor second;
    };

    OptimizerConfig config_;
    std::vector<Slot> state_;
    std::uint64_t step_ = 0;
};

}  // namespace mrmf
