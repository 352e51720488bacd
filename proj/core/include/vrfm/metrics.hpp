#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vrfm/distributions.hpp"
#include "vrfm/models.hpp"

namespace vrfm {

/// Mean analytic target log-density of generated samples.
double true_log_likelihood(const Matrix& generated, const DistributionSpec& target);

/// Mean over test points of the log Parzen-window density built on the
/// generated samples with isotropic Gaussian kernels of width `bandwidth`.
double parzen_log_likelihood(const Matrix& generated, const Matrix& test, double bandwidth);

/// Bandwidth maximizing held-out likelihood on a 10% validation split of the
/// generated samples, over a log-spaced grid in [0.01, 1].
double select_parzen_bandwidth(const Matrix& generated, Rng& rng, int grid_points = 20,
                               double h_min = 0.01, double h_max = 1.0);

/// W1 between equal-size 1D samples via sorted pairing.
double wasserstein_1d(std::vector<double> a, std::vector<double> b);

/// Sliced W1: mean over random unit directions of wasserstein_1d on the
/// projections. Inputs are n x 2.
double sliced_wasserstein(const Matrix& a, const Matrix& b, int n_projections, Rng& rng);

/// Exact W1 under Euclidean cost via an O(n^3) assignment solve; n <= 2000.
/// Slow oracle used to validate the sliced estimate's method ordering.
double exact_wasserstein_2d(const Matrix& a, const Matrix& b);

/// Two-sample Kolmogorov-Smirnov statistic (1D).
double ks_statistic(std::vector<double> a, std::vector<double> b);
/// Rejection threshold c(alpha) * sqrt((n+m)/(n m)) at significance alpha.
double ks_threshold(std::size_t n, std::size_t m, double alpha);

// ---------------------------------------------------------------------------
// Velocity-ambiguity analysis: per-bin velocity standard deviation over a
// data-domain x time-domain grid, plus velocity histograms at probe points.
// ---------------------------------------------------------------------------

struct ProbePoint {
  Vector x;
  double t = 0.0;
};

struct ProbeHistogram {
  ProbePoint at;
  Matrix velocities;  // k x dim samples collected at the probe bin
  bool valid = true;  // false when the probe bin failed occupancy
};

struct AmbiguityConfig {
  double x_min = -2.0;
  double x_max = 2.0;
  double x_step = 0.2;  // bin width; halfwidth is x_step/2
  double t_min = 0.0;
  double t_step = 0.05;
  int n_t = 20;
  long gt_pool_draws = 100'000'000;  // coupling pool for the ground-truth map
  long probe_max_draws = 10'000'000;
  Index min_occupancy = 100;
  Index n_per_bin = 1000;  // z draws per bin for model maps; probe sample target
  std::vector<ProbePoint> probes;  // defaults to the four 1D probe locations
};

struct AmbiguityReport {
  std::vector<double> xs;  // bin centers per data axis (product grid for 2D)
  std::vector<double> ts;
  /// Flattened over the data grid (row index) x time grid (column index);
  /// for 1D the row index runs over xs, for 2D over xs x xs (x2-major).
  Matrix stddev;
  Matrix count;
  Matrix mask;  // 1 = bin meets occupancy, 0 = masked (stddev is NaN there)
  std::vector<ProbeHistogram> probes;
  std::string source_tag;  // ground_truth | model_rfm | model_vrfm
  int data_dim = 1;
};

struct GroundTruthSource {
  const DistributionSpec* source;
  const DistributionSpec* target;
};
struct ModelSource {
  const VelocityModel* model;  // baseline -> deterministic, std exactly 0
};

using VelocitySource = std::variant<GroundTruthSource, ModelSource>;

/// Ground truth bins couplings from a shared pool (the batch form of
/// conditional_velocity_samples); probe histograms use per-bin rejection.
/// Model sources evaluate v at each bin center: the variational model with a
/// fresh prior z per draw, the baseline once (a point mass).
AmbiguityReport ambiguity_map(const VelocitySource& source, const AmbiguityConfig& cfg,
                              Rng& rng);

/// Pearson correlation of per-bin stddev over bins unmasked in both reports.
double ambiguity_pearson(const AmbiguityReport& a, const AmbiguityReport& b);

// One evaluation-protocol row: sampling a checkpoint at one solver setting.
struct MetricRow {
  std::string method;  // rfm | vrfm
  std::string steps;   // "2", "5", ... or "adaptive"
  std::string seed;    // seed number, or "mean"/"std" aggregate rows
  double true_ll = 0.0;
  double parzen_ll = 0.0;
  double wasserstein = 0.0;
  double nfe = 0.0;
};

}  // namespace vrfm
