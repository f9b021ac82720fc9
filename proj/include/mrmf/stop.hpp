#pragma once

#include <cstddef>
#include <vector>

#include "mrmf/errors.hpp"

namespace mrmf {

// Plateau detector inputs: stop once the per-epoch loss reduction stays below
// epsilon for `patience` consecutive epochs, or at the hard epoch cap.
struct StopCondition {
    double epsilon = 1e-3;
    std::size_t patience = 1;
    std::size_t max_epochs = 2;

    bool operator==(const StopCondition&) const = default;
};

// Lenient check used by the trainer: a cap-only condition (max_epochs below
// patience + 1, so the plateau rule can never fire) is legal there.
inline void validate_stop_condition_lenient(const StopCondition& c) {
    if (!(c.epsilon > 0.0)) throw ConfigError("stop condition: epsilon must be > 0");
    if (c.patience < 1) throw ConfigError("stop condition: patience must be >= 1");
    if (c.max_epochs < 1) throw ConfigError("stop condition: max_epochs must be >= 1");
}

// Strict check applied to user-facing configuration, where the plateau rule
// is expected to be reachable before the cap.
inline void validate_stop_condition(const StopCondition& c) {
    validate_stop_condition_lenient(c);
    if (c.max_epochs < c.patience + 1)
        throw ConfigError("stop condition: max_epochs must be >= patience + 1");
}

// True iff history has reached max_epochs, or the last `patience` consecutive
// reductions loss[e-1] - loss[e] are all below epsilon. Loss increases count
// as below-threshold reductions: an oscillating loss is not progress.
inline bool should_stop(const std::vector<double>& loss_history, const StopCondition& cond) {
    if (loss_history.size() >= cond.max_epochs) return true;
    if (loss_history.size() < cond.patience + 1) return false;
    for (std::size_t i = loss_history.size() - cond.patience; i < loss_history.size(); ++i)
        if (loss_history[i - 1] - loss_history[i] >= cond.epsilon) return false;
    return true;
}

}  // namespace mrmf
