#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vrfm/common.hpp"

namespace vrfm {

struct MixtureComponent {
  double weight = 1.0;
  Vector mean;
  double stddev = 1.0;  // isotropic
};

/// Analytic source/target density: a single Gaussian or an isotropic Gaussian
/// mixture. Weights are positive and sum to 1 within 1e-12.
struct DistributionSpec {
  enum class Kind { kGaussian, kMixture };
  Kind kind = Kind::kGaussian;
  int dim = 1;
  std::vector<MixtureComponent> components;

  void validate() const;
};

/// Built-in specs: source_1d, target_1d_bimodal, source_2d_circle,
/// target_2d_circle. `mode_std` overrides the mixture component stddev
/// (defaults: 0.28 for the 1D bimodal target, 0.1 for the 2D circles).
DistributionSpec builtin_spec(const std::string& name,
                              std::optional<double> mode_std = std::nullopt);

constexpr double kDefaultModeStd1d = 0.28;
constexpr double kDefaultModeStd2d = 0.1;

/// n i.i.d. samples, one row each.
Matrix sample(const DistributionSpec& spec, Index n, Rng& rng);

/// log( sum_i w_i N(x; mu_i, s_i^2 I) ), computed with log-sum-exp.
double log_density(const DistributionSpec& spec, const Vector& x);

struct CouplingBatch {
  Matrix x0;  // n x dim source samples
  Matrix x1;  // n x dim target samples
  Vector t;   // n, uniform in [0,1)
  Matrix xt;  // interpolate(x0, x1, t) rowwise
  Matrix v;   // x1 - x0 rowwise
};

/// The linear interpolation path; the single definition every call site uses,
/// so recomputing xt from (x0, x1, t) is bit-identical.
inline double interpolate(double x0, double x1, double t) {
  return (1.0 - t) * x0 + t * x1;
}

/// Independent couplings with per-row t ~ U(0,1); xt and v filled per the
/// linear interpolation path.
CouplingBatch sample_coupling(const DistributionSpec& source, const DistributionSpec& target,
                              Index n, Rng& rng);

struct BinQuery {
  Vector xt_center;
  double t_center = 0.0;
  double x_halfwidth = 0.1;
  double t_halfwidth = 0.025;
  Index n_wanted = 1000;
  Index min_kept = 10;
  long max_draws = 10'000'000;
};

/// Rejection sampling of the conditional velocity distribution: draws
/// couplings and keeps v = x1 - x0 for rows whose (xt, t) falls inside the
/// bin. Returns up to n_wanted velocities (one row each); throws
/// OccupancyError carrying the kept count if fewer than min_kept were found
/// within max_draws.
Matrix conditional_velocity_samples(const DistributionSpec& source,
                                    const DistributionSpec& target, const BinQuery& bin,
                                    Rng& rng);

}  // namespace vrfm
