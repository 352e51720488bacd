#pragma once

// Shared test utilities: the finite-difference route for checking training
// gradients, independent of the tape (it perturbs parameters and re-evaluates
// the loss through the no-tape eval path).

#include <string>

#include "vrfm/training.hpp"

namespace vrfm::testutil {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  long coords_checked = 0;
};

inline double rel_err(double fd, double ad) {
  return std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1.0});
}

/// Autodiff grads of the rfm loss vs central finite differences over every
/// parameter coordinate.
inline GradCheckReport rfm_grad_report(VelocityModel model, const CouplingBatch& batch,
                                       double h) {
  Tape tape;
  const auto bound = model.bind(tape, true);
  const NodeId loss = build_rfm_loss(tape, model, bound, batch);
  const BackwardResult back = backward(tape, loss);

  GradCheckReport report;
  auto& params = model.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& values = params[p].values;
    const Matrix grad = back.has_grad(bound.param_ids[p])
                            ? back.grad(bound.param_ids[p])
                            : Matrix::Zero(values.rows(), values.cols());
    for (Index r = 0; r < values.rows(); ++r) {
      for (Index c = 0; c < values.cols(); ++c) {
        const double keep = values(r, c);
        values(r, c) = keep + h;
        const double up = rfm_loss_eval(model, batch);
        values(r, c) = keep - h;
        const double dn = rfm_loss_eval(model, batch);
        values(r, c) = keep;
        const double err = rel_err((up - dn) / (2 * h), grad(r, c));
        ++report.coords_checked;
        if (err > report.max_rel_error) {
          report.max_rel_error = err;
          report.worst_param = params[p].name;
        }
      }
    }
  }
  return report;
}

/// Same for the variational loss; checks both the velocity model's and the
/// posterior's parameters against the total objective.
inline GradCheckReport vrfm_grad_report(VelocityModel model, PosteriorModel posterior,
                                        const CouplingBatch& batch, double beta, double h,
                                        Rng& rng) {
  const Matrix eps = rng.normal_matrix(batch.xt.rows(), model.config().latent_dim);
  Tape tape;
  const auto mbound = model.bind(tape, true);
  const auto pbound = posterior.bind(tape, true);
  const VrfmLossNodes nodes =
      build_vrfm_loss(tape, model, mbound, posterior, pbound, batch, beta, eps);
  const BackwardResult back = backward(tape, nodes.total);

  GradCheckReport report;
  auto eval = [&] { return vrfm_loss_eval(model, posterior, batch, beta, eps).total; };
  auto sweep = [&](std::vector<Parameter>& params, const std::vector<NodeId>& ids,
                   const char* prefix) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      Matrix& values = params[p].values;
      const Matrix grad = back.has_grad(ids[p])
                              ? back.grad(ids[p])
                              : Matrix::Zero(values.rows(), values.cols());
      for (Index r = 0; r < values.rows(); ++r) {
        for (Index c = 0; c < values.cols(); ++c) {
          const double keep = values(r, c);
          values(r, c) = keep + h;
          const double up = eval();
          values(r, c) = keep - h;
          const double dn = eval();
          values(r, c) = keep;
          const double err = rel_err((up - dn) / (2 * h), grad(r, c));
          ++report.coords_checked;
          if (err > report.max_rel_error) {
            report.max_rel_error = err;
            report.worst_param = std::string(prefix) + params[p].name;
          }
        }
      }
    }
  };
  sweep(model.params(), mbound.param_ids, "velocity.");
  sweep(posterior.params(), pbound.param_ids, "posterior.");
  return report;
}

}  // namespace vrfm::testutil
