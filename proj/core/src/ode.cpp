#include "vrfm/ode.hpp"

#include <algorithm>
#include <cmath>

namespace vrfm {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// 5th-order minus embedded 4th-order weights.
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

double error_norm(const Matrix& err, const Matrix& y0, const Matrix& y1, double atol,
                  double rtol) {
  double acc = 0.0;
  for (Index i = 0; i < err.rows(); ++i) {
    for (Index j = 0; j < err.cols(); ++j) {
      const double sc = atol + rtol * std::max(std::abs(y0(i, j)), std::abs(y1(i, j)));
      const double r = err(i, j) / sc;
      acc += r * r;
    }
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

}  // namespace

ModelField::ModelField(const VelocityModel& model, std::optional<Matrix> z)
    : model_(model), z_(std::move(z)) {
  if (model_.config().latent_dim > 0 && !z_)
    throw Error("ModelField: latent model requires a fixed z");
  if (model_.config().latent_dim == 0 && z_)
    throw Error("ModelField: baseline model does not accept z");
}

Matrix ModelField::eval(const Matrix& x, double t) const {
  const Matrix tcol = Matrix::Constant(x.rows(), 1, t);
  if (!z_) return model_.eval(x, tcol);
  if (z_->rows() != x.rows())
    throw ShapeError("ModelField: z rows do not match state rows");
  return model_.eval(x, tcol, &*z_);
}

NodeId ModelField::build(Tape& tape, NodeId x, double t) const {
  const Index rows = tape.value(x).rows();
  const NodeId tcol = tape.leaf(Matrix::Constant(rows, 1, t));
  const auto bound = model_.bind(tape, /*params_require_grad=*/false);
  if (!z_) return model_.forward(tape, bound, x, tcol);
  const NodeId z = tape.leaf(*z_);
  return model_.forward(tape, bound, x, tcol, z);
}

Trajectory integrate_euler(const OdeField& field, const Matrix& x_start, int n_steps) {
  if (n_steps < 1) throw Error("integrate_euler: n_steps must be >= 1");
  Trajectory traj;
  traj.times.reserve(n_steps + 1);
  traj.states.reserve(n_steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(x_start);

  Matrix x = x_start;
  for (int k = 0; k < n_steps; ++k) {
    const double t0 = static_cast<double>(k) / n_steps;
    const double t1 = static_cast<double>(k + 1) / n_steps;
    x += (t1 - t0) * field.eval(x, t0);
    ++traj.nfe;
    if (!all_finite(x))
      throw NumericsError("integrate_euler: non-finite state at step " + std::to_string(k));
    traj.times.push_back(t1);
    traj.states.push_back(x);
  }
  return traj;
}

Trajectory integrate_dopri5(const OdeField& field, const Matrix& x_start,
                            const SolverConfig& cfg) {
  if (!(cfg.rtol > 0.0 && cfg.atol > 0.0))
    throw Error("integrate_dopri5: rtol and atol must be positive");

  Trajectory traj;
  traj.times.push_back(0.0);
  traj.states.push_back(x_start);

  double t = 0.0;
  Matrix y = x_start;
  Matrix k1 = field.eval(y, t);
  traj.nfe = 1;

  double h = std::min({cfg.h_init, cfg.h_max, 1.0});
  double prev_err = 1.0;  // PI controller memory
  const double alpha = 0.2, beta = 0.04;

  while (t < 1.0) {
    h = std::min({h, cfg.h_max, 1.0 - t});
    if (traj.nfe + 6 > cfg.max_nfe)
      throw NumericsError("integrate_dopri5: max_nfe exhausted at t = " + std::to_string(t));

    const Matrix k2 = field.eval(y + h * (a21 * k1), t + c2 * h);
    const Matrix k3 = field.eval(y + h * (a31 * k1 + a32 * k2), t + c3 * h);
    const Matrix k4 = field.eval(y + h * (a41 * k1 + a42 * k2 + a43 * k3), t + c4 * h);
    const Matrix k5 =
        field.eval(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t + c5 * h);
    const Matrix k6 = field.eval(
        y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), t + h);
    const Matrix y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Matrix k7 = field.eval(y_new, t + h);  // FSAL
    traj.nfe += 6;

    const Matrix err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    if (!all_finite(y_new) || !all_finite(err))
      throw NumericsError("integrate_dopri5: non-finite state at t = " + std::to_string(t));
    const double err_norm = error_norm(err, y, y_new, cfg.atol, cfg.rtol);

    if (err_norm <= 1.0) {
      t += h;
      y = y_new;
      k1 = k7;
      traj.times.push_back(t);
      traj.states.push_back(y);
      const double grow = cfg.safety * std::pow(std::max(err_norm, 1e-10), -alpha) *
                          std::pow(std::max(prev_err, 1e-10), beta);
      h *= std::clamp(grow, cfg.fac_min, cfg.fac_max);
      prev_err = std::max(err_norm, 1e-10);
    } else {
      const double shrink = cfg.safety * std::pow(err_norm, -alpha);
      h *= std::clamp(shrink, cfg.fac_min, 1.0);
    }
    if (h < 1e-14 && t < 1.0)
      throw NumericsError("integrate_dopri5: step size underflow at t = " + std::to_string(t));
  }
  return traj;
}

double exact_divergence(const OdeField& field, const Vector& x, double t) {
  const int d = field.dim();
  if (x.size() != d) throw ShapeError("exact_divergence: point has wrong length");
  double div = 0.0;
  for (int j = 0; j < d; ++j) {
    Tape tape;
    const NodeId xn = tape.leaf(x.transpose(), /*requires_grad=*/true);
    const NodeId out = field.build(tape, xn, t);
    Matrix pick = Matrix::Zero(1, d);
    pick(0, j) = 1.0;
    const NodeId loss = tape.sum(tape.mul(out, tape.leaf(pick)));
    const BackwardResult back = backward(tape, loss);
    if (back.has_grad(xn)) div += back.grad(xn)(0, j);
  }
  return div;
}

HutchinsonEstimate hutchinson_divergence(const OdeField& field, const Vector& x, double t,
                                         int n_probes, Rng& rng) {
  if (n_probes < 1) throw Error("hutchinson_divergence: n_probes must be >= 1");
  const int d = field.dim();
  if (x.size() != d) throw ShapeError("hutchinson_divergence: point has wrong length");

  double sum = 0.0, sum_sq = 0.0;
  for (int p = 0; p < n_probes; ++p) {
    Matrix probe(1, d);
    for (int j = 0; j < d; ++j) probe(0, j) = rng.rademacher();
    Tape tape;
    const NodeId xn = tape.leaf(x.transpose(), /*requires_grad=*/true);
    const NodeId out = field.build(tape, xn, t);
    const NodeId loss = tape.sum(tape.mul(out, tape.leaf(probe)));
    const BackwardResult back = backward(tape, loss);
    const Matrix vjp = back.has_grad(xn) ? back.grad(xn) : Matrix::Zero(1, d);
    const double est = (vjp.array() * probe.array()).sum();
    sum += est;
    sum_sq += est * est;
  }
  HutchinsonEstimate out;
  out.estimate = sum / n_probes;
  if (n_probes > 1) {
    const double var = (sum_sq - sum * sum / n_probes) / (n_probes - 1);
    out.stderr_ = std::sqrt(std::max(var, 0.0) / n_probes);
  }
  return out;
}

SampleResult sample(const VelocityModel& model, const DistributionSpec& source, Index n,
                    const SolverConfig& solver, Rng& rng, bool keep_trajectories) {
  if (source.dim != model.config().data_dim)
    throw ShapeError("sample: source dim does not match model data_dim");
  const Matrix x0 = vrfm::sample(source, n, rng);
  const bool latent = model.config().latent_dim > 0;
  Matrix z;
  if (latent) z = rng.normal_matrix(n, model.config().latent_dim);

  SampleResult result;
  if (solver.kind == SolverConfig::Kind::kEuler) {
    // All rows share the fixed time grid, so one batched integration serves.
    ModelField field(model, latent ? std::optional<Matrix>(z) : std::nullopt);
    Trajectory traj = integrate_euler(field, x0, solver.steps);
    result.samples = traj.states.back();
    result.mean_nfe = static_cast<double>(traj.nfe);
    if (keep_trajectories) {
      for (Index i = 0; i < n; ++i) {
        Trajectory ti;
        ti.times = traj.times;
        ti.nfe = traj.nfe;
        for (const Matrix& s : traj.states) ti.states.push_back(s.row(i));
        result.trajectories.push_back(std::move(ti));
      }
    }
  } else {
    result.samples.resize(n, source.dim);
    double nfe_sum = 0.0;
    for (Index i = 0; i < n; ++i) {
      std::optional<Matrix> zi;
      if (latent) zi = z.row(i);
      ModelField field(model, zi);
      Trajectory traj = integrate_dopri5(field, x0.row(i), solver);
      result.samples.row(i) = traj.states.back().row(0);
      nfe_sum += static_cast<double>(traj.nfe);
      if (keep_trajectories) result.trajectories.push_back(std::move(traj));
    }
    result.mean_nfe = nfe_sum / static_cast<double>(n);
  }
  return result;
}

namespace {

/// Augmented reverse-time field on (x, lambda): dx/ds = -f(x, 1-s),
/// dlambda/ds = div_x f(x, 1-s). After integrating s: 0 -> 1 from (x1, 0),
/// log p1(x1) = log p0(x(1)) - lambda(1).
class AugmentedReverseField : public OdeField {
 public:
  AugmentedReverseField(const OdeField& fwd, DivergenceMode mode, int n_probes, Rng* rng)
      : fwd_(fwd), mode_(mode), n_probes_(n_probes), rng_(rng) {}
  int dim() const override { return fwd_.dim() + 1; }
  Matrix eval(const Matrix& state, double s) const override {
    const int d = fwd_.dim();
    const Matrix x = state.leftCols(d);
    const double t = 1.0 - s;
    Matrix out(state.rows(), d + 1);
    out.leftCols(d) = -fwd_.eval(x, t);
    for (Index i = 0; i < state.rows(); ++i) {
      const Vector xi = x.row(i).transpose();
      double div;
      if (mode_ == DivergenceMode::kExact) {
        div = exact_divergence(fwd_, xi, t);
      } else {
        if (!rng_) throw Error("hutchinson divergence needs an rng");
        div = hutchinson_divergence(fwd_, xi, t, n_probes_, *rng_).estimate;
      }
      out(i, d) = div;
    }
    return out;
  }

 private:
  const OdeField& fwd_;
  DivergenceMode mode_;
  int n_probes_;
  Rng* rng_;
};

}  // namespace

double log_likelihood(const OdeField& forward_field, const DistributionSpec& source,
                      const Vector& x1, const SolverConfig& solver,
                      DivergenceMode div_mode, int n_probes, Rng* rng) {
  if (x1.size() != forward_field.dim())
    throw ShapeError("log_likelihood: x1 has wrong length");
  AugmentedReverseField aug(forward_field, div_mode, n_probes, rng);

  Matrix state(1, forward_field.dim() + 1);
  state.leftCols(forward_field.dim()) = x1.transpose();
  state(0, forward_field.dim()) = 0.0;

  Trajectory traj;
  if (solver.kind == SolverConfig::Kind::kEuler)
    traj = integrate_euler(aug, state, solver.steps);
  else
    traj = integrate_dopri5(aug, state, solver);

  const Matrix& final = traj.states.back();
  const Vector x0 = final.row(0).head(forward_field.dim()).transpose();
  const double lambda = final(0, forward_field.dim());
  return log_density(source, x0) - lambda;
}

double log_likelihood(const VelocityModel& model, const DistributionSpec& source,
                      const Vector& x1, const SolverConfig& solver, ZPolicy z_policy,
                      Rng& rng, int n_z, DivergenceMode div_mode) {
  const bool latent = model.config().latent_dim > 0;
  if (!latent) {
    if (z_policy != ZPolicy::kNone)
      throw Error("log_likelihood: baseline model requires z_policy = none");
    ModelField field(model);
    return log_likelihood(field, source, x1, solver, div_mode, 8, &rng);
  }
  if (z_policy == ZPolicy::kNone)
    throw Error("log_likelihood: latent model requires a z policy");

  const int draws = z_policy == ZPolicy::kFixedZ ? 1 : std::max(1, n_z);
  std::vector<double> lls;
  lls.reserve(draws);
  for (int i = 0; i < draws; ++i) {
    const Matrix z = rng.normal_matrix(1, model.config().latent_dim);
    ModelField field(model, z);
    lls.push_back(log_likelihood(field, source, x1, solver, div_mode, 8, &rng));
  }
  if (z_policy == ZPolicy::kFixedZ) return lls[0];
  // log-mean-exp over prior draws.
  const double m = *std::max_element(lls.begin(), lls.end());
  double acc = 0.0;
  for (double ll : lls) acc += std::exp(ll - m);
  return m + std::log(acc / draws);
}

}  // namespace vrfm
