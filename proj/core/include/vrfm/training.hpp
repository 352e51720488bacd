#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vrfm/distributions.hpp"
#include "vrfm/models.hpp"
#include "vrfm/optim.hpp"

namespace vrfm {

enum class Objective { kRfm, kVrfm };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& name);

struct TrainConfig {
  int iterations = 20000;
  int batch_size = 1000;
  double lr = 1e-3;
  double kl_weight = 1.0;  // unused for rfm
  std::uint64_t seed = 1;
  int log_every = 100;
  Objective objective = Objective::kVrfm;
  double weight_decay = 0.01;
};

struct LossBreakdown {
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

struct LogRow {
  int iteration = 0;
  double recon = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

/// Mean squared velocity regression error of a latent-free model on a batch:
/// mean_i || v(xt_i, t_i) - v_i ||^2. Throws if the model has a latent input.
double rfm_loss(const VelocityModel& model, const CouplingBatch& batch);

/// Tape builder used by both the scalar helper and the training loop.
NodeId build_rfm_loss(Tape& tape, const VelocityModel& model,
                      const VelocityModel::Bound& bound, const CouplingBatch& batch);

struct VrfmLossNodes {
  NodeId recon;
  NodeId kl;
  NodeId total;
};

/// Single-sample variational objective on a batch: per row, sample
/// z = mu + eps*sigma from the posterior, regress v(xt, t, z) against the
/// coupling velocity, and add beta * KL(q || N(0,I)). `eps` is n x latent_dim.
VrfmLossNodes build_vrfm_loss(Tape& tape, const VelocityModel& model,
                              const VelocityModel::Bound& mbound,
                              const PosteriorModel& posterior,
                              const PosteriorModel::Bound& pbound,
                              const CouplingBatch& batch, double beta, const Matrix& eps);

LossBreakdown vrfm_loss(const VelocityModel& model, const PosteriorModel& posterior,
                        const CouplingBatch& batch, double beta, Rng& rng);

/// No-tape loss evaluation with a frozen eps; used as the independent
/// finite-difference route when checking training gradients.
LossBreakdown vrfm_loss_eval(const VelocityModel& model, const PosteriorModel& posterior,
                             const CouplingBatch& batch, double beta, const Matrix& eps);
double rfm_loss_eval(const VelocityModel& model, const CouplingBatch& batch);

struct Checkpoint {
  std::uint32_t format_version = 1;
  std::string objective;
  std::string task;  // synthetic_1d | synthetic_2d (stamped by the experiment layer)
  VelocityModelConfig model_cfg;
  std::optional<PosteriorConfig> posterior_cfg;
  DistributionSpec source;  // data the run was trained on
  DistributionSpec target;
  std::vector<Parameter> params;  // "velocity.<name>" then "posterior.<name>"
  TrainConfig train_cfg;
  LossBreakdown final_losses;  // means over the last 100 iterations
  std::uint64_t seed = 0;
};

struct TrainResult {
  VelocityModel model;
  std::optional<PosteriorModel> posterior;
  std::vector<LogRow> history;
  LossBreakdown final_losses;
  Checkpoint checkpoint;
};

/// Runs exactly cfg.iterations AdamW steps of the configured objective.
/// Fully deterministic given cfg.seed. Throws NumericsError (with the
/// iteration index and last finite losses) if the loss leaves the reals.
TrainResult train(const DistributionSpec& source, const DistributionSpec& target,
                  const VelocityModelConfig& model_cfg,
                  const std::optional<PosteriorConfig>& posterior_cfg,
                  const TrainConfig& train_cfg);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds the runtime models stored in a checkpoint.
VelocityModel velocity_from_checkpoint(const Checkpoint& ckpt);
std::optional<PosteriorModel> posterior_from_checkpoint(const Checkpoint& ckpt);

}  // namespace vrfm
