#pragma once

#include <string>
#include <vector>

#include "vrfm/config.hpp"

namespace vrfm {

// Orchestration used by both the CLI and the acceptance suite. Functions
// throw ConfigError for schema/usage problems (CLI exit 2) and other errors
// for runtime failures (CLI exit 3).

/// VRFM_OUTPUT_ROOT, when set, overrides any configured/flagged output dir.
std::string effective_output_dir(const std::string& configured);

struct TrainCellOutputs {
  std::uint64_t seed = 0;
  std::string checkpoint_path;
  std::string loss_csv_path;
};

struct TrainOutputs {
  std::string resolved_config_path;
  std::vector<TrainCellOutputs> cells;
};

/// Trains one cell per configured seed; writes the resolved config snapshot,
/// a checkpoint and a loss CSV per seed under <out>/<task>/<objective>/<seed>/.
TrainOutputs cmd_train(const ExperimentConfig& cfg, int jobs = 1);

struct SampleOutputs {
  std::string samples_csv_path;
  std::string trajectories_csv_path;  // empty unless trajectories were requested
  double mean_nfe = 0.0;
};

SampleOutputs cmd_sample(const std::string& ckpt_path, Index n, const SolverConfig& solver,
                         std::uint64_t seed, const std::string& out_dir,
                         Index n_trajectories = 0);

/// One row per (checkpoint, solver setting); aggregate mean/std rows appended
/// per (method, setting). Writes CSV with a fixed header.
std::vector<MetricRow> cmd_evaluate(const std::vector<std::string>& ckpt_paths,
                                    const MetricsConfig& mcfg, const SolverConfig& adaptive,
                                    const std::string& out_csv);

struct AmbiguityOutputs {
  std::string grid_csv_path;
  std::vector<std::string> probe_csv_paths;
  std::string heatmap_svg_path;  // 1D only
};

/// `source_arg` is either "ground-truth" (task taken from cfg) or a
/// checkpoint path. Emits the per-bin std grid, probe histograms, and for 1D
/// a heatmap SVG.
AmbiguityOutputs cmd_ambiguity(const std::string& source_arg, const ExperimentConfig& cfg,
                               const std::string& out_dir, std::uint64_t seed = 99);

struct ReproduceOutputs {
  std::string root;
  std::vector<std::string> checkpoints;
  std::string metrics_csv_path;
  std::string summary_csv_path;
  std::vector<std::string> ambiguity_csv_paths;
};

/// Full single-task reproduction: rfm and vrfm x all seeds, evaluation sweep,
/// ambiguity reports, trajectory exports, and summary plots.
ReproduceOutputs cmd_reproduce(const std::string& task, const std::string& out_root,
                               int jobs = 2);

// CSV helpers shared with tests (deterministic %.17g formatting).
std::string format_double(double v);
void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows);
void write_loss_csv(const std::string& path, const std::vector<LogRow>& history);
void write_ambiguity_csv(const std::string& path, const AmbiguityReport& report);
void write_samples_csv(const std::string& path, const Matrix& samples);
void write_trajectories_csv(const std::string& path, const std::vector<Trajectory>& trajs);

}  // namespace vrfm
