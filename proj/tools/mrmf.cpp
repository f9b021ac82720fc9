// mrmf: dataset generation, downsampling, baseline/fusion training runs,
// standalone checkpoint fusion, and report rendering.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrmf/config.hpp"
#include "mrmf/mrmf.hpp"

namespace fs = std::filesystem;

namespace {

// 0 success, 2 config, 3 data, 4 training, 5 fusion, 1 anything else.
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTrain = 4;
constexpr int kExitFusion = 5;

std::string shape_str(const mrmf::Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(s[i]);
    }
    return out;
}

std::vector<std::size_t> parse_factor_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::istringstream in(text);
    std::string cell;
    while (std::getline(in, cell, ',')) {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(cell, &pos);
        } catch (const std::exception&) {
            throw mrmf::ConfigError("bad factor '" + cell + "' in --factors");
        }
        if (pos != cell.size() || v == 0)
            throw mrmf::ConfigError("bad factor '" + cell + "' in --factors");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw mrmf::ConfigError("--factors needs at least one integer");
    return out;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_path) {
    mrmf::ExperimentConfig cfg = mrmf::parse_experiment_config(config_path);
    if (!cfg.synthetic)
        throw mrmf::ConfigError("gen-data needs a config with data.kind = 'synthetic'");
    mrmf::Dataset data = mrmf::generate_synthetic(cfg.task);
    mrmf::write_dataset(data, out_path);
    std::cout << "samples=" << data.size() << " shape=" << shape_str(data.sample_shape())
              << " label_length=" << data.label_length() << " file=" << out_path << '\n';
    return 0;
}

int cmd_downsample(const std::string& in_path, const std::string& factors_text,
                   const std::string& out_path) {
    mrmf::ResolutionFactors factors{parse_factor_list(factors_text)};
    mrmf::Dataset in = mrmf::read_dataset(in_path);
    mrmf::Dataset out = mrmf::downsample_dataset(in, factors);
    mrmf::write_dataset(out, out_path);
    std::cout << "in=" << shape_str(in.sample_shape()) << " out=" << shape_str(out.sample_shape())
              << " samples=" << out.size() << " file=" << out_path << '\n';
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& mode, const std::string& out_flag,
              long long workers_flag, long long seed_flag, bool concurrent_flag) {
    mrmf::ExperimentConfig cfg = mrmf::parse_experiment_config(config_path);
    if (!cfg.has_schedule)
        throw mrmf::ConfigError("config " + config_path + " has no schedule section");
    if (!out_flag.empty()) cfg.options.out_dir = out_flag;
    if (cfg.options.out_dir.empty())
        throw mrmf::ConfigError("no output directory: set config 'output_dir' or pass --out");
    if (workers_flag >= 0) cfg.options.workers = static_cast<std::size_t>(workers_flag);
    if (seed_flag >= 0) cfg.options.seed = static_cast<std::uint64_t>(seed_flag);
    if (concurrent_flag) cfg.options.concurrent = true;

    mrmf::PipelineSpec spec = cfg.pipeline;
    if (mode == "baseline") spec.stages.clear();

    fs::create_directories(cfg.options.out_dir);
    const std::string metrics_path = cfg.options.out_dir + "/metrics.csv";
    const std::string summary_path = cfg.options.out_dir + "/summary.csv";

    mrmf::DatasetSplit split = mrmf::load_config_data(cfg);
    mrmf::PipelineResult result;
    try {
        result = mrmf::run_pipeline(spec, split.train, split.val, cfg.options);
    } catch (const mrmf::TrainError& e) {
        const std::string diag_path = cfg.options.out_dir + "/abort_diagnostic.txt";
        std::ofstream diag(diag_path, std::ios::trunc);
        diag << e.what() << '\n';
        std::cerr << "error: " << e.what() << "\ndiagnostic record: " << diag_path << '\n';
        return kExitTrain;
    }

    mrmf::write_metrics_csv(result.records, metrics_path);
    mrmf::write_phase_totals_csv(mrmf::aggregate_phases(result.records), summary_path);

    for (const mrmf::StageReport& s : result.stages)
        std::cout << "stage" << s.stage << ": coarse_epochs=" << s.coarse_epochs
                  << " dense_epochs=" << s.dense_epochs
                  << " dense_val_loss=" << mrmf::format_double(s.dense_final_val_loss) << '\n';
    std::cout << "finetune_epochs=" << result.finetune_epochs
              << " total_seconds=" << mrmf::format_double(result.total_seconds)
              << " final_val_loss=" << mrmf::format_double(result.final_val_loss)
              << " best_val_loss=" << mrmf::format_double(result.best_val_loss) << '\n';
    std::cout << "metrics=" << metrics_path << " summary=" << summary_path;
    if (!result.final_checkpoint_path.empty())
        std::cout << " checkpoint=" << result.final_checkpoint_path;
    std::cout << '\n';
    return 0;
}

int cmd_fuse(const std::string& coarse_path, const std::string& dense_path,
             const std::string& out_path, bool reinit_first_fc, long long reinit_seed) {
    mrmf::Model coarse = mrmf::load_checkpoint(coarse_path);
    mrmf::Model dense = mrmf::load_checkpoint(dense_path);
    mrmf::FuseOptions opts;
    opts.reinit_first_fc = reinit_first_fc;
    if (reinit_seed >= 0) opts.reinit_seed = static_cast<std::uint64_t>(reinit_seed);
    mrmf::Model fused = mrmf::fuse(coarse, dense, opts);
    mrmf::save_checkpoint(fused, out_path);

    const mrmf::LayerGroups groups = mrmf::split_layer_groups(fused);
    auto describe = [&](const std::vector<std::size_t>& idx) {
        std::string out;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (i) out += ',';
            out += mrmf::layer_kind_name(fused.layers[idx[i]].kind);
        }
        return out;
    };
    std::cout << "bottom=coarse layers[0.." << groups.bottom.back() << "]: "
              << describe(groups.bottom) << '\n';
    std::cout << "top=dense layers[" << groups.top.front() << ".." << groups.top.back()
              << "]: " << describe(groups.top);
    if (reinit_first_fc) std::cout << " (first fc reinitialized)";
    std::cout << '\n';
    std::cout << "file=" << out_path << '\n';
    return 0;
}

int cmd_report(const std::string& metrics_arg, const std::string& out_prefix) {
    std::string metrics_path = metrics_arg;
    if (fs::is_directory(metrics_path)) metrics_path += "/metrics.csv";
    std::cout << mrmf::make_report(metrics_path, out_prefix) << '\n';
    std::cout << "phases_csv=" << out_prefix << "_phases.csv svg=" << out_prefix << "_loss.svg\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-resolution fusion training toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_path, in_path, factors_text, mode = "mrmf";
    std::string coarse_path, dense_path, metrics_arg;
    long long workers_flag = -1, seed_flag = -1, reinit_seed = -1;
    bool concurrent_flag = false, reinit_first_fc = false;

    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset (.mrd)");
    gen->add_option("--config", config_path, "Experiment config file")->required();
    gen->add_option("--out", out_path, "Output .mrd path")->required();

    CLI::App* down = app.add_subcommand("downsample", "Reduce a dataset's resolution (.mrd)");
    down->add_option("--in", in_path, "Input .mrd path")->required();
    down->add_option("--factors", factors_text,
                     "Comma-separated per-axis block sizes, e.g. 2,2,2")->required();
    down->add_option("--out", out_path, "Output .mrd path")->required();

    CLI::App* train = app.add_subcommand("train", "Run a training experiment from a config");
    train->add_option("--config", config_path, "Experiment config file")->required();
    train->add_option("--mode", mode, "Training mode")
        ->check(CLI::IsMember({"baseline", "mrmf"}))
        ->capture_default_str();
    train->add_option("--out", out_path, "Output directory (overrides config output_dir)");
    train->add_option("--workers", workers_flag, "Worker count (overrides config)");
    train->add_option("--seed", seed_flag, "Master seed (overrides config)");
    train->add_flag("--concurrent", concurrent_flag,
                    "Train each stage's coarse and dense models concurrently");

    CLI::App* fuse = app.add_subcommand("fuse", "Fuse two checkpoints (.mrc)");
    fuse->add_option("--coarse", coarse_path, "Coarse checkpoint (bottom layer group)")->required();
    fuse->add_option("--dense", dense_path, "Dense checkpoint (top layer group)")->required();
    fuse->add_option("--out", out_path, "Output checkpoint path")->required();
    fuse->add_flag("--reinit-first-fc", reinit_first_fc,
                   "Reinitialize the first fully connected layer instead of copying it");
    fuse->add_option("--reinit-seed", reinit_seed, "Seed for --reinit-first-fc");

    CLI::App* report = app.add_subcommand("report", "Render per-phase totals CSV and loss SVG");
    report->add_option("--metrics", metrics_arg, "metrics.csv path or directory containing it")
        ->required();
    report->add_option("--out", out_path, "Output path prefix")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_path);
        if (down->parsed()) return cmd_downsample(in_path, factors_text, out_path);
        if (train->parsed())
            return cmd_train(config_path, mode, out_path, workers_flag, seed_flag, concurrent_flag);
        if (fuse->parsed()) return cmd_fuse(coarse_path, dense_path, out_path, reinit_first_fc,
                                            reinit_seed);
        if (report->parsed()) return cmd_report(metrics_arg, out_path);
    } catch (const mrmf::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const mrmf::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const mrmf::TrainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitTrain;
    } catch (const mrmf::FusionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFusion;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitOther;
    }
    return kExitOther;
}
