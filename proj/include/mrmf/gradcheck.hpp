#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mrmf/errors.hpp"
#include "mrmf/loss.hpp"
#include "mrmf/model.hpp"

namespace mrmf {

struct GradCheckLayerReport {
    std::size_t layer = 0;
    std::string kind;
    double max_rel_error = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    bool pass = true;
    double max_rel_error = 0.0;
    std::vector<GradCheckLayerReport> layers;  // only layers that own parameters
};

// Central finite differences of the MSE training loss against the analytic
// backward pass, parameter by parameter. Relative error is
// |analytic - numeric| / max(1, |analytic|, |numeric|), so exact-zero
// gradients are judged on the absolute scale where difference noise lives.
inline GradCheckReport gradient_check(Model& model, const Tensor& inputs, const Tensor& targets,
                                      double tolerance = 1e-4, double h = 1e-5) {
    if (model.param_count() >= 10000)
        throw TrainError("gradient_check: model has " + std::to_string(model.param_count()) +
                         " parameters, differencing is limited to < 10000");

    // Batch-norm running stats drift across the many forward passes below;
    // snapshot and restore so the check leaves the model untouched.
    const std::vector<LayerState> saved_state = model.state;
    const std::uint64_t saved_version = model.version;

    ForwardCache cache;
    Tensor pred = model_forward(model, inputs, /*training=*/true, &cache);
    Tensor dloss = mse_loss_grad(pred, targets);
    ModelGrads analytic = model_backward(model, cache, dloss);

    auto loss_at = [&]() {
        Tensor p = model_forward(model, inputs, /*training=*/true);
        return mse_loss(p, targets);
    };

    GradCheckReport report;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        if (model.params[li].tensors.empty()) continue;
        GradCheckLayerReport lr;
        lr.layer = li;
        lr.kind = layer_kind_name(model.layers[li].kind);
        for (std::size_t ti = 0; ti < model.params[li].tensors.size(); ++ti) {
            Tensor& p = model.params[li].tensors[ti];
            const Tensor& a = analytic.params[li].tensors[ti];
            for (std::size_t e = 0; e < p.numel(); ++e) {
                const double saved = p.data[e];
                p.data[e] = saved + h;
                const double lp = loss_at();
                p.data[e] = saved - h;
                const double lm = loss_at();
                p.data[e] = saved;
                const double numeric = (lp - lm) / (2.0 * h);
                const double denom = std::max({1.0, std::abs(a.data[e]), std::abs(numeric)});
                lr.max_rel_error = std::max(lr.max_rel_error, std::abs(a.data[e] - numeric) / denom);
            }
        }
        lr.pass = lr.max_rel_error < tolerance;
        report.max_rel_error = std::max(report.max_rel_error, lr.max_rel_error);
        report.pass = report.pass && lr.pass;
        report.layers.push_back(std::move(lr));
    }

    model.state = saved_state;
    model.version = saved_version;
    return report;
}

}  // namespace mrmf
