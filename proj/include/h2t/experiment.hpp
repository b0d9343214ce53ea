#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "h2t/config.hpp"
#include "h2t/diagnostics.hpp"
#include "h2t/training.hpp"

namespace h2t {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };
LogLevel log_level(); // H2T_LOG = quiet | info | debug
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

/// Tracks files written under a run directory and finalizes a MANIFEST of
/// "<fnv64 hex>  <relative path>" lines, sorted by path.
class ArtifactDir {
public:
    explicit ArtifactDir(const std::string& root);
    const std::string& root() const { return root_; }
    std::string path_of(const std::string& relative) const;
    void write_text(const std::string& relative, const std::string& content);
    void note(const std::string& relative); // register a file written externally
    void write_manifest() const;

private:
    std::string root_;
    std::vector<std::string> files_;
};

struct TrainArtifacts {
    ModelState stage1;
    ModelState stage2;
    RunRecord record_stage1;
    RunRecord record_stage2;
    MetricsReport metrics;
};

/// Full two-stage run into `out_dir`: checkpoints at both stage boundaries,
/// run records, metrics and a MANIFEST. A non-empty `stage1_checkpoint`
/// resumes from that checkpoint instead of training stage I.
TrainArtifacts run_train(const ExperimentConfig& cfg, const std::string& out_dir,
                         const std::string& stage1_checkpoint = "");

struct SweepRow {
    std::string value; // axis value, formatted
    std::string seed;  // decimal seed, or "median"
    MetricsReport metrics;
};

struct SweepResult {
    std::string axis;          // csv header name of the axis column
    std::vector<SweepRow> rows; // data rows followed by one median row per value
};

/// Fusion-ratio sweep. Stage I runs once with the base seed and is shared by
/// every (p, seed) stage-II run.
SweepResult run_sweep_p(const ExperimentConfig& cfg, const std::string& out_dir,
                        const std::vector<double>& p_values, const std::vector<uint64_t>& seeds,
                        int jobs = 1);

/// Fusing-branch sampler ablation; the fused branch stays class-balanced.
SweepResult run_ablate_sampler(const ExperimentConfig& cfg, const std::string& out_dir,
                               const std::vector<SamplerKind>& kinds,
                               const std::vector<uint64_t>& seeds, int jobs = 1);

/// Channel-selection ablation. Deterministic strategies run once on the
/// first seed; the random strategy runs once per seed.
SweepResult run_ablate_selection(const ExperimentConfig& cfg, const std::string& out_dir,
                                 const std::vector<SelectionStrategy>& strategies,
                                 const std::vector<uint64_t>& seeds, int jobs = 1);

/// Post-hoc diagnostics over a finished run directory: prediction
/// histograms for both stage checkpoints, force-proxy table for every
/// (head, tail) class pair, embedding dump, and (for 2-D inputs) the
/// decision-boundary grid as CSV and SVG.
void run_diagnose(const std::string& run_dir);

/// Generates the configured dataset and persists it with its sidecar.
void run_gen_data(const ExperimentConfig& cfg, const std::string& out_dir);

double median(std::vector<double> values);

} // namespace h2t
