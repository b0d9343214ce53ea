// Experiment runner for two-stage long-tailed training with head-to-tail
// feature fusion. See README.md for the config grammar and output layout.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "h2t/errors.hpp"
#include "h2t/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

h2t::ExperimentConfig load_config(const std::string& path, uint64_t seed_override,
                                  bool has_seed_override) {
    h2t::ExperimentConfig cfg = h2t::ExperimentConfig::from_file(path);
    if (has_seed_override) cfg.train_seed = seed_override;
    cfg.validate();
    return cfg;
}

std::vector<h2t::SamplerKind> parse_kinds(const std::vector<std::string>& names) {
    std::vector<h2t::SamplerKind> kinds;
    for (const std::string& n : names) kinds.push_back(h2t::sampler_from_name(n));
    return kinds;
}

std::vector<h2t::SelectionStrategy> parse_strategies(const std::vector<std::string>& names) {
    std::vector<h2t::SelectionStrategy> out;
    for (const std::string& n : names) out.push_back(h2t::strategy_from_name(n));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"h2t: two-stage long-tailed training with head-to-tail feature fusion"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool has_seed = false;
    int jobs = 1;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        if (needs_config) {
            cmd->add_option("--config", config_path, "experiment config file")->required();
        }
        cmd->add_option("--out", out_dir, "output directory (overrides [output] dir)");
        cmd->add_option("--seed", seed, "training seed (overrides [schedule] seed)")
            ->each([&](const std::string&) { has_seed = true; });
        cmd->add_option("--jobs", jobs, "parallel stage-II workers for sweeps")
            ->check(CLI::PositiveNumber);
    };

    // train
    auto* train = app.add_subcommand("train", "run stage I + stage II and evaluate");
    std::string from_ckpt;
    bool stage2_only = false;
    add_common(train);
    train->add_flag("--stage2-only", stage2_only, "skip stage I (requires --from)");
    train->add_option("--from", from_ckpt, "stage-I checkpoint to resume from");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate and persist the configured dataset");
    add_common(gen);

    // sweep-p
    auto* sweep = app.add_subcommand("sweep-p", "fusion-ratio sweep sharing one stage-I model");
    std::vector<double> p_values{0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0};
    std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
    add_common(sweep);
    sweep->add_option("--p", p_values, "fusion ratios to sweep")->delimiter(',');
    sweep->add_option("--seeds", seeds, "stage-II seeds per point")->delimiter(',');

    // ablate-sampler
    auto* absampler = app.add_subcommand("ablate-sampler", "fusing-branch sampler ablation");
    std::vector<std::string> kind_names{"reverse", "class_balanced", "instance_wise"};
    add_common(absampler);
    absampler->add_option("--kinds", kind_names, "fusing samplers to compare")->delimiter(',');
    absampler->add_option("--seeds", seeds, "stage-II seeds per point")->delimiter(',');

    // ablate-selection
    auto* abselect = app.add_subcommand("ablate-selection", "channel-selection ablation");
    std::vector<std::string> strategy_names{"first", "middle", "last", "random"};
    add_common(abselect);
    abselect->add_option("--strategies", strategy_names, "selection strategies to compare")
        ->delimiter(',');
    abselect->add_option("--seeds", seeds, "seeds for the random strategy")->delimiter(',');

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "emit diagnostics for a finished run");
    std::string run_dir;
    diag->add_option("--run", run_dir, "run directory produced by `train`")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*train) {
            const h2t::ExperimentConfig cfg = load_config(config_path, seed, has_seed);
            if (stage2_only && from_ckpt.empty()) {
                throw h2t::ConfigError("--stage2-only requires --from <stage1.ckpt>");
            }
            const std::string dir = out_dir.empty() ? cfg.out_dir : out_dir;
            h2t::run_train(cfg, dir, stage2_only ? from_ckpt : "");
        } else if (*gen) {
            const h2t::ExperimentConfig cfg = load_config(config_path, seed, has_seed);
            const std::string dir = out_dir.empty() ? cfg.out_dir : out_dir;
            h2t::run_gen_data(cfg, dir);
        } else if (*sweep) {
            const h2t::ExperimentConfig cfg = load_config(config_path, seed, has_seed);
            const std::string dir = out_dir.empty() ? cfg.out_dir : out_dir;
            h2t::run_sweep_p(cfg, dir, p_values, seeds, jobs);
        } else if (*absampler) {
            const h2t::ExperimentConfig cfg = load_config(config_path, seed, has_seed);
            const std::string dir = out_dir.empty() ? cfg.out_dir : out_dir;
            h2t::run_ablate_sampler(cfg, dir, parse_kinds(kind_names), seeds, jobs);
        } else if (*abselect) {
            const h2t::ExperimentConfig cfg = load_config(config_path, seed, has_seed);
            const std::string dir = out_dir.empty() ? cfg.out_dir : out_dir;
            h2t::run_ablate_selection(cfg, dir, parse_strategies(strategy_names), seeds, jobs);
        } else if (*diag) {
            h2t::run_diagnose(run_dir);
        }
    } catch (const h2t::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const h2t::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const h2t::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
