#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vrfm/metrics.hpp"
#include "vrfm/ode.hpp"
#include "vrfm/training.hpp"

namespace vrfm {

struct MetricsConfig {
  Index n_generated = 10000;
  Index n_test = 10000;
  std::vector<int> eval_steps = {2, 5, 10, 50, 100};
  bool include_adaptive = true;
  int n_projections = 256;
  int parzen_grid_points = 20;
  double parzen_h_min = 0.01;
  double parzen_h_max = 1.0;
};

/// Full declarative description of one training/evaluation run. Defaults are
/// task-dependent and materialized by default_config(); parsed configs reject
/// unknown keys and re-serialize to a canonical form that round-trips.
struct ExperimentConfig {
  std::string task = "synthetic_1d";  // synthetic_1d | synthetic_2d
  Objective objective = Objective::kVrfm;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string output_dir = "out";
  double mode_std = kDefaultModeStd1d;
  DistributionSpec source;
  DistributionSpec target;
  VelocityModelConfig model;
  PosteriorConfig posterior;
  TrainConfig train;  // objective and seed are stamped per run
  SolverConfig solver;
  MetricsConfig metrics;
  AmbiguityConfig ambiguity;

  int data_dim() const { return task == "synthetic_2d" ? 2 : 1; }
  void validate() const;
};

ExperimentConfig default_config(const std::string& task, Objective objective);

ExperimentConfig config_from_json_string(const std::string& text);
ExperimentConfig config_from_file(const std::string& path);

/// Canonical resolved form (all defaults materialized, keys sorted).
std::string config_to_json_string(const ExperimentConfig& cfg);

}  // namespace vrfm
