#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrmf/dataset.hpp"
#include "mrmf/dataset_io.hpp"
#include "mrmf/errors.hpp"
#include "mrmf/pipeline.hpp"

namespace mrmf {

struct ExperimentConfig {
    // data section
    bool synthetic = true;
    SyntheticTaskSpec task;     // when synthetic
    std::string dataset_path;   // when loading from file
    double split_train = 0.8;
    double split_val = 0.1;
    double split_test = 0.1;

    // model + schedule
    PipelineSpec pipeline;
    bool has_schedule = false;

    // run options (out_dir left to the command line)
    PipelineOptions options;
};

namespace cfg_detail {

using json = nlohmann::json;

[[noreturn]] inline void fail(const std::string& where, const std::string& msg) {
    throw ConfigError(where + ": " + msg);
}

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
    if (!j.is_object()) fail(where, "expected an object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key())) fail(where, "unknown key '" + item.key() + "'");
}

inline const json* find(const json& j, const std::string& key) {
    auto it = j.find(key);
    return it == j.end() ? nullptr : &*it;
}

inline const json& require(const json& j, const std::string& key, const std::string& where) {
    const json* v = find(j, key);
    if (!v) fail(where, "missing required key '" + key + "'");
    return *v;
}

inline double get_double(const json& j, const std::string& key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_number()) fail(where, "'" + key + "' must be a number");
    return v.get<double>();
}

inline double get_double_or(const json& j, const std::string& key, double fallback,
                            const std::string& where) {
    return find(j, key) ? get_double(j, key, where) : fallback;
}

inline std::size_t get_size(const json& j, const std::string& key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_number_unsigned()) fail(where, "'" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
}

inline std::size_t get_size_or(const json& j, const std::string& key, std::size_t fallback,
                               const std::string& where) {
    return find(j, key) ? get_size(j, key, where) : fallback;
}

inline std::uint64_t get_u64_or(const json& j, const std::string& key, std::uint64_t fallback,
                                const std::string& where) {
    if (!find(j, key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number_unsigned()) fail(where, "'" + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

inline bool get_bool_or(const json& j, const std::string& key, bool fallback,
                        const std::string& where) {
    if (!find(j, key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_boolean()) fail(where, "'" + key + "' must be a boolean");
    return v.get<bool>();
}

inline std::string get_string(const json& j, const std::string& key, const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_string()) fail(where, "'" + key + "' must be a string");
    return v.get<std::string>();
}

inline std::vector<std::size_t> get_size_list(const json& j, const std::string& key,
                                              const std::string& where) {
    const json& v = require(j, key, where);
    if (!v.is_array() || v.empty()) fail(where, "'" + key + "' must be a non-empty list");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        if (!e.is_number_unsigned()) fail(where, "'" + key + "' entries must be non-negative integers");
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

inline StopCondition parse_stop(const json& j, const std::string& where) {
    check_keys(j, {"epsilon", "patience", "max_epochs"}, where);
    StopCondition c;
    c.epsilon = get_double(j, "epsilon", where);
    c.patience = get_size(j, "patience", where);
    c.max_epochs = get_size(j, "max_epochs", where);
    validate_stop_condition(c);
    return c;
}

inline OptimizerConfig parse_optimizer(const json& j, const std::string& where) {
    check_keys(j, {"kind", "learning_rate", "momentum", "beta1", "beta2", "eps"}, where);
    OptimizerConfig c;
    const std::string kind = get_string(j, "kind", where);
    if (kind == "sgd")
        c.kind = OptimizerKind::sgd;
    else if (kind == "adam")
        c.kind = OptimizerKind::adam;
    else
        fail(where, "optimizer kind must be 'sgd' or 'adam', got '" + kind + "'");
    c.learning_rate = get_double(j, "learning_rate", where);
    c.momentum = get_double_or(j, "momentum", c.momentum, where);
    c.beta1 = get_double_or(j, "beta1", c.beta1, where);
    c.beta2 = get_double_or(j, "beta2", c.beta2, where);
    c.eps = get_double_or(j, "eps", c.eps, where);
    validate_optimizer_config(c);
    return c;
}

inline LayerSpec parse_layer(const json& j, const std::string& where) {
    const std::string kind = get_string(j, "kind", where);
    if (kind == "conv") {
        check_keys(j, {"kind", "kernel", "stride", "pad", "out_channels"}, where);
        std::vector<std::size_t> kernel = get_size_list(j, "kernel", where);
        std::vector<std::size_t> stride =
            find(j, "stride") ? get_size_list(j, "stride", where)
                              : std::vector<std::size_t>(kernel.size(), 1);
        std::vector<std::size_t> pad = find(j, "pad") ? get_size_list(j, "pad", where)
                                                      : std::vector<std::size_t>(kernel.size(), 0);
        return conv_layer(std::move(kernel), std::move(stride), std::move(pad), 0,
                          get_size(j, "out_channels", where));
    }
    if (kind == "avgpool") {
        check_keys(j, {"kind", "kernel", "stride", "pad"}, where);
        std::vector<std::size_t> kernel = get_size_list(j, "kernel", where);
        std::vector<std::size_t> stride =
            find(j, "stride") ? get_size_list(j, "stride", where) : kernel;
        std::vector<std::size_t> pad = find(j, "pad") ? get_size_list(j, "pad", where)
                                                      : std::vector<std::size_t>(kernel.size(), 0);
        return avg_pool_layer(std::move(kernel), std::move(stride), std::move(pad));
    }
    if (kind == "batchnorm") {
        check_keys(j, {"kind"}, where);
        return batch_norm_layer();
    }
    if (kind == "relu") {
        check_keys(j, {"kind"}, where);
        return relu_layer();
    }
    if (kind == "tanh") {
        check_keys(j, {"kind"}, where);
        return tanh_layer();
    }
    if (kind == "flatten") {
        check_keys(j, {"kind"}, where);
        return flatten_layer();
    }
    if (kind == "fc") {
        check_keys(j, {"kind", "out_features"}, where);
        return fc_layer(0, get_size(j, "out_features", where));
    }
    fail(where, "unknown layer kind '" + kind + "'");
}

inline ResolutionFactors parse_factors(const json& j, const std::string& key,
                                       const std::string& where) {
    return ResolutionFactors{get_size_list(j, key, where)};
}

inline StagePlan parse_stage(const json& j, const std::string& where) {
    check_keys(j,
               {"coarse_factors", "dense_factors", "coarse_stop", "dense_stop", "coarse_batch",
                "dense_batch", "coarse_optimizer", "dense_optimizer"},
               where);
    StagePlan p;
    p.coarse_factors = parse_factors(j, "coarse_factors", where);
    p.dense_factors = parse_factors(j, "dense_factors", where);
    p.coarse_stop = parse_stop(require(j, "coarse_stop", where), where + ".coarse_stop");
    p.dense_stop = parse_stop(require(j, "dense_stop", where), where + ".dense_stop");
    p.coarse_batch = get_size(j, "coarse_batch", where);
    p.dense_batch = get_size(j, "dense_batch", where);
    p.coarse_opt = parse_optimizer(require(j, "coarse_optimizer", where), where + ".coarse_optimizer");
    p.dense_opt = parse_optimizer(require(j, "dense_optimizer", where), where + ".dense_optimizer");
    return p;
}

}  // namespace cfg_detail

inline ExperimentConfig parse_experiment_config(const std::string& path) {
    namespace cd = cfg_detail;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    cd::json root;
    try {
        root = cd::json::parse(in);
    } catch (const cd::json::parse_error& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }

    cd::check_keys(root,
                   {"seed", "workers", "concurrent", "worker_granularity", "dense_seconds_estimate",
                    "coarse_seconds_estimate", "deterministic_timing", "fuse_reinit_first_fc",
                    "output_dir", "data", "model", "schedule"},
                   "config");

    ExperimentConfig cfg;
    cfg.options.seed = cd::get_u64_or(root, "seed", 0, "config");
    cfg.options.workers = cd::get_size_or(root, "workers", 1, "config");
    if (cfg.options.workers < 1) cd::fail("config", "'workers' must be >= 1");
    cfg.options.concurrent = cd::get_bool_or(root, "concurrent", false, "config");
    cfg.options.worker_granularity = cd::get_size_or(root, "worker_granularity", 1, "config");
    cfg.options.dense_seconds_estimate =
        cd::get_double_or(root, "dense_seconds_estimate", 0.0, "config");
    cfg.options.coarse_seconds_estimate =
        cd::get_double_or(root, "coarse_seconds_estimate", 0.0, "config");
    cfg.options.deterministic_timing =
        cd::get_bool_or(root, "deterministic_timing", false, "config");
    cfg.options.fuse_options.reinit_first_fc =
        cd::get_bool_or(root, "fuse_reinit_first_fc", false, "config");
    if (cd::find(root, "output_dir"))
        cfg.options.out_dir = cd::get_string(root, "output_dir", "config");

    // data
    const cd::json& data = cd::require(root, "data", "config");
    const std::string data_kind = cd::get_string(data, "kind", "config.data");
    if (data_kind == "synthetic") {
        cd::check_keys(data,
                       {"kind", "shape", "label_length", "components", "max_frequency", "amp_min",
                        "amp_max", "samples", "data_seed", "split"},
                       "config.data");
        cfg.synthetic = true;
        cfg.task.sample_shape = cd::get_size_list(data, "shape", "config.data");
        cfg.task.label_length = cd::get_size(data, "label_length", "config.data");
        cfg.task.components = cd::get_size_or(data, "components", 1, "config.data");
        cfg.task.max_frequency = cd::get_size_or(data, "max_frequency", 1, "config.data");
        cfg.task.amp_min = cd::get_double_or(data, "amp_min", 0.5, "config.data");
        cfg.task.amp_max = cd::get_double_or(data, "amp_max", 1.5, "config.data");
        cfg.task.sample_count = cd::get_size(data, "samples", "config.data");
        cfg.task.seed = cd::get_u64_or(data, "data_seed", 0, "config.data");
    } else if (data_kind == "file") {
        cd::check_keys(data, {"kind", "path", "split"}, "config.data");
        cfg.synthetic = false;
        cfg.dataset_path = cd::get_string(data, "path", "config.data");
        if (!std::filesystem::exists(cfg.dataset_path))
            cd::fail("config.data", "dataset path does not exist: " + cfg.dataset_path);
    } else {
        cd::fail("config.data", "kind must be 'synthetic' or 'file', got '" + data_kind + "'");
    }
    if (cd::find(data, "split")) {
        const cd::json& split = data.at("split");
        if (!split.is_array() || split.size() != 3)
            cd::fail("config.data", "'split' must be [train, val, test] fractions");
        for (const auto& e : split)
            if (!e.is_number()) cd::fail("config.data", "'split' entries must be numbers");
        cfg.split_train = split[0].get<double>();
        cfg.split_val = split[1].get<double>();
        cfg.split_test = split[2].get<double>();
    }
    if (cfg.synthetic) {
        cfg.task.train_fraction = cfg.split_train;
        cfg.task.val_fraction = cfg.split_val;
        cfg.task.test_fraction = cfg.split_test;
        validate_task_spec(cfg.task);
    }

    // model
    const cd::json& model = cd::require(root, "model", "config");
    cd::check_keys(model, {"layers"}, "config.model");
    const cd::json& layers = cd::require(model, "layers", "config.model");
    if (!layers.is_array() || layers.empty())
        cd::fail("config.model", "'layers' must be a non-empty list");
    for (std::size_t i = 0; i < layers.size(); ++i)
        cfg.pipeline.architecture.push_back(
            cd::parse_layer(layers[i], "config.model.layers[" + std::to_string(i) + "]"));

    // schedule (optional; required by the train command)
    if (const cd::json* schedule = cd::find(root, "schedule")) {
        cd::check_keys(*schedule, {"stages", "finetune_stop", "finetune_batch", "finetune_optimizer"},
                       "config.schedule");
        cfg.has_schedule = true;
        if (const cd::json* stages = cd::find(*schedule, "stages")) {
            if (!stages->is_array()) cd::fail("config.schedule", "'stages' must be a list");
            for (std::size_t i = 0; i < stages->size(); ++i)
                cfg.pipeline.stages.push_back(cd::parse_stage(
                    (*stages)[i], "config.schedule.stages[" + std::to_string(i) + "]"));
        }
        cfg.pipeline.finetune_stop = cd::parse_stop(
            cd::require(*schedule, "finetune_stop", "config.schedule"), "config.schedule.finetune_stop");
        cfg.pipeline.finetune_batch = cd::get_size(*schedule, "finetune_batch", "config.schedule");
        cfg.pipeline.finetune_opt =
            cd::parse_optimizer(cd::require(*schedule, "finetune_optimizer", "config.schedule"),
                                "config.schedule.finetune_optimizer");
    }
    return cfg;
}

// Loads (or generates) the configured dataset and returns the train/val/test
// partitions at the original resolution.
inline DatasetSplit load_config_data(const ExperimentConfig& cfg) {
    Dataset full = cfg.synthetic ? generate_synthetic(cfg.task) : read_dataset(cfg.dataset_path);
    const double total = cfg.split_train + cfg.split_val + cfg.split_test;
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("config.data: split fractions must sum to 1");
    return split_dataset(full, cfg.split_train, cfg.split_val);
}

}  // namespace mrmf
