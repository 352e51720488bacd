#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "vrfm/distributions.hpp"
#include "vrfm/models.hpp"

namespace vrfm {

/// A time-dependent velocity field on row-stacked states. `eval` drives plain
/// integration; `build` plays the same computation onto a tape so divergence
/// can be taken with reverse-mode passes.
class OdeField {
 public:
  virtual ~OdeField() = default;
  virtual int dim() const = 0;
  virtual Matrix eval(const Matrix& x, double t) const = 0;
  virtual NodeId build(Tape& tape, NodeId x, double t) const {
    throw Error("this field does not support tape evaluation");
  }
};

/// Velocity model as an ODE field. For latent models `z` holds one fixed
/// latent per row of the integrated state (sampled once per trajectory).
class ModelField : public OdeField {
 public:
  ModelField(const VelocityModel& model, std::optional<Matrix> z = std::nullopt);
  int dim() const override { return model_.config().data_dim; }
  Matrix eval(const Matrix& x, double t) const override;
  NodeId build(Tape& tape, NodeId x, double t) const override;

 private:
  const VelocityModel& model_;
  std::optional<Matrix> z_;
};

/// Time reversal: g(x, s) = -f(x, 1-s).
class ReverseField : public OdeField {
 public:
  explicit ReverseField(const OdeField& base) : base_(base) {}
  int dim() const override { return base_.dim(); }
  Matrix eval(const Matrix& x, double s) const override {
    return -base_.eval(x, 1.0 - s);
  }
  NodeId build(Tape& tape, NodeId x, double s) const override {
    return tape.scale(base_.build(tape, x, 1.0 - s), -1.0);
  }

 private:
  const OdeField& base_;
};

/// Analytic field for tests and closed-form checks; the optional builder
/// enables divergence support.
class LambdaField : public OdeField {
 public:
  using EvalFn = std::function<Matrix(const Matrix&, double)>;
  using BuildFn = std::function<NodeId(Tape&, NodeId, double)>;
  LambdaField(int dim, EvalFn eval, BuildFn build = nullptr)
      : dim_(dim), eval_(std::move(eval)), build_(std::move(build)) {}
  int dim() const override { return dim_; }
  Matrix eval(const Matrix& x, double t) const override { return eval_(x, t); }
  NodeId build(Tape& tape, NodeId x, double t) const override {
    if (!build_) return OdeField::build(tape, x, t);
    return build_(tape, x, t);
  }

 private:
  int dim_;
  EvalFn eval_;
  BuildFn build_;
};

struct Trajectory {
  std::vector<double> times;   // increasing, 0 to 1 for forward sampling
  std::vector<Matrix> states;  // one n x dim matrix per time
  long nfe = 0;
};

struct SolverConfig {
  enum class Kind { kEuler, kDopri5 };
  Kind kind = Kind::kEuler;
  int steps = 100;  // Euler
  // Dopri5 controls.
  double rtol = 1e-5;
  double atol = 1e-5;
  double h_init = 1e-2;
  double h_max = 1.0;
  double safety = 0.9;
  double fac_min = 0.2;
  double fac_max = 10.0;
  long max_nfe = 100000;
};

/// Fixed-step forward Euler over t in [0,1]: x_{k+1} = x_k + h f(x_k, t_k).
Trajectory integrate_euler(const OdeField& field, const Matrix& x_start, int n_steps);

/// Dormand-Prince 5(4) with FSAL and PI step-size control over t in [0,1].
/// Throws NumericsError when max_nfe is exhausted or the state leaves the
/// reals; the error message carries the time reached.
Trajectory integrate_dopri5(const OdeField& field, const Matrix& x_start,
                            const SolverConfig& cfg);

/// Trace of d field / d x at (x, t) via one reverse-mode pass per dimension.
double exact_divergence(const OdeField& field, const Vector& x, double t);

struct HutchinsonEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
};

/// Skilling-Hutchinson trace estimate with Rademacher probes, one
/// vector-Jacobian product each.
HutchinsonEstimate hutchinson_divergence(const OdeField& field, const Vector& x, double t,
                                         int n_probes, Rng& rng);

enum class DivergenceMode { kExact, kHutchinson };
enum class ZPolicy { kNone, kFixedZ, kMcMarginal };

struct SampleResult {
  Matrix samples;  // n x dim states at t=1
  double mean_nfe = 0.0;
  std::vector<Trajectory> trajectories;  // per-sample paths when requested
};

/// Algorithm-2 sampling: draw x0 from the source, draw z from the prior once
/// per trajectory (latent models only), integrate forward from t=0 to t=1.
SampleResult sample(const VelocityModel& model, const DistributionSpec& source, Index n,
                    const SolverConfig& solver, Rng& rng, bool keep_trajectories = false);

/// Exact log-likelihood of x1 under the flow: integrates the augmented state
/// (x, accumulated divergence) in reverse and returns
/// log p0(x(0)) + integral_1^0 div f dt.
double log_likelihood(const OdeField& forward_field, const DistributionSpec& source,
                      const Vector& x1, const SolverConfig& solver,
                      DivergenceMode div_mode = DivergenceMode::kExact, int n_probes = 8,
                      Rng* rng = nullptr);

/// Model wrapper around the field version. For latent models z_policy picks
/// between a single prior draw (kFixedZ: a conditional likelihood) and a
/// log-mean-exp over n_z prior draws (kMcMarginal).
double log_likelihood(const VelocityModel& model, const DistributionSpec& source,
                      const Vector& x1, const SolverConfig& solver, ZPolicy z_policy,
                      Rng& rng, int n_z = 16,
                      DivergenceMode div_mode = DivergenceMode::kExact);

}  // namespace vrfm
