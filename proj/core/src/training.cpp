#include "vrfm/training.hpp"

#include <cmath>
#include <deque>
#include <sstream>

namespace vrfm {

namespace {

NodeId squared_error_mean(Tape& tape, NodeId pred, NodeId target_leaf, Index n) {
  const NodeId diff = tape.add(pred, tape.scale(target_leaf, -1.0));
  return tape.scale(tape.sum(tape.square(diff)), 1.0 / static_cast<double>(n));
}

/// sum_i 0.5 (mu^2 + e^{2 raw} - 1 - 2 raw) / n
NodeId kl_mean_node(Tape& tape, NodeId mu, NodeId raw, Index n, Index latent_dim) {
  const NodeId neg_one = tape.leaf(Matrix::Constant(1, latent_dim, -1.0));
  const NodeId inner = tape.add(
      tape.add(tape.square(mu), tape.exp(tape.scale(raw, 2.0))),
      tape.add(tape.scale(raw, -2.0), neg_one));
  return tape.scale(tape.sum(inner), 0.5 / static_cast<double>(n));
}

Matrix column(const Vector& v) { return v; }

}  // namespace

std::string objective_name(Objective o) {
  return o == Objective::kRfm ? "rfm" : "vrfm";
}

Objective objective_from_name(const std::string& name) {
  if (name == "rfm") return Objective::kRfm;
  if (name == "vrfm") return Objective::kVrfm;
  throw ConfigError("unknown objective: " + name);
}

NodeId build_rfm_loss(Tape& tape, const VelocityModel& model,
                      const VelocityModel::Bound& bound, const CouplingBatch& batch) {
  if (model.config().latent_dim != 0)
    throw Error("rfm_loss: model must have latent_dim = 0");
  const NodeId xt = tape.leaf(batch.xt);
  const NodeId t = tape.leaf(column(batch.t));
  const NodeId v = tape.leaf(batch.v);
  const NodeId pred = model.forward(tape, bound, xt, t);
  return squared_error_mean(tape, pred, v, batch.xt.rows());
}

double rfm_loss(const VelocityModel& model, const CouplingBatch& batch) {
  Tape tape;
  const auto bound = model.bind(tape, /*params_require_grad=*/false);
  return tape.value(build_rfm_loss(tape, model, bound, batch))(0, 0);
}

VrfmLossNodes build_vrfm_loss(Tape& tape, const VelocityModel& model,
                              const VelocityModel::Bound& mbound,
                              const PosteriorModel& posterior,
                              const PosteriorModel::Bound& pbound,
                              const CouplingBatch& batch, double beta, const Matrix& eps) {
  if (model.config().latent_dim != posterior.config().latent_dim)
    throw ShapeError("vrfm_loss: model latent_dim " +
                     std::to_string(model.config().latent_dim) +
                     " != posterior latent_dim " +
                     std::to_string(posterior.config().latent_dim));
  if (model.config().latent_dim <= 0)
    throw Error("vrfm_loss: model must have latent_dim > 0");
  const Index n = batch.xt.rows();
  if (eps.rows() != n || eps.cols() != model.config().latent_dim)
    throw ShapeError("vrfm_loss: eps must be n x latent_dim");

  const NodeId x0 = tape.leaf(batch.x0);
  const NodeId x1 = tape.leaf(batch.x1);
  const NodeId xt = tape.leaf(batch.xt);
  const NodeId t = tape.leaf(column(batch.t));
  const NodeId v = tape.leaf(batch.v);

  const PosteriorModel::Nodes post = posterior.forward(tape, pbound, x0, x1, xt, t);
  const NodeId eps_leaf = tape.leaf(eps);
  const NodeId z = tape.add(post.mu, tape.mul(eps_leaf, post.sigma));
  const NodeId pred = model.forward(tape, mbound, xt, t, z);

  VrfmLossNodes out;
  out.recon = squared_error_mean(tape, pred, v, n);
  out.kl = kl_mean_node(tape, post.mu, post.raw, n, model.config().latent_dim);
  out.total = tape.add(out.recon, tape.scale(out.kl, beta));
  return out;
}

LossBreakdown vrfm_loss(const VelocityModel& model, const PosteriorModel& posterior,
                        const CouplingBatch& batch, double beta, Rng& rng) {
  const Matrix eps = rng.normal_matrix(batch.xt.rows(), model.config().latent_dim);
  Tape tape;
  const auto mbound = model.bind(tape, false);
  const auto pbound = posterior.bind(tape, false);
  const VrfmLossNodes nodes = build_vrfm_loss(tape, model, mbound, posterior, pbound,
                                              batch, beta, eps);
  return {tape.value(nodes.recon)(0, 0), tape.value(nodes.kl)(0, 0),
          tape.value(nodes.total)(0, 0)};
}

double rfm_loss_eval(const VelocityModel& model, const CouplingBatch& batch) {
  const Matrix pred = model.eval(batch.xt, column(batch.t));
  return (pred - batch.v).squaredNorm() / static_cast<double>(batch.xt.rows());
}

LossBreakdown vrfm_loss_eval(const VelocityModel& model, const PosteriorModel& posterior,
                             const CouplingBatch& batch, double beta, const Matrix& eps) {
  const Index n = batch.xt.rows();
  const auto [mu, sigma] = posterior.eval(batch.x0, batch.x1, batch.xt, column(batch.t));
  const Matrix z = mu + eps.cwiseProduct(sigma);
  const Matrix pred = model.eval(batch.xt, column(batch.t), &z);
  LossBreakdown out;
  out.recon = (pred - batch.v).squaredNorm() / static_cast<double>(n);
  const Eigen::ArrayXXd s2 = sigma.array().square();
  out.kl = 0.5 * (mu.array().square() + s2 - 1.0 - s2.log()).sum() / static_cast<double>(n);
  out.total = out.recon + beta * out.kl;
  return out;
}

TrainResult train(const DistributionSpec& source, const DistributionSpec& target,
                  const VelocityModelConfig& model_cfg,
                  const std::optional<PosteriorConfig>& posterior_cfg,
                  const TrainConfig& train_cfg) {
  source.validate();
  target.validate();
  if (source.dim != target.dim || source.dim != model_cfg.data_dim)
    throw ShapeError("train: source/target/model dims disagree");
  const bool variational = train_cfg.objective == Objective::kVrfm;
  if (variational && !posterior_cfg)
    throw ConfigError("train: objective vrfm requires a posterior config");
  if (variational && model_cfg.latent_dim <= 0)
    throw ConfigError("train: objective vrfm requires model latent_dim > 0");
  if (!variational && model_cfg.latent_dim != 0)
    throw ConfigError("train: objective rfm requires model latent_dim = 0");
  if (train_cfg.kl_weight < 0.0) throw ConfigError("train: kl_weight must be >= 0");

  Rng rng(train_cfg.seed);
  TrainResult result;
  result.model = VelocityModel::init(model_cfg, rng);
  if (variational) result.posterior = PosteriorModel::init(*posterior_cfg, rng);

  AdamWConfig opt_cfg;
  opt_cfg.lr = train_cfg.lr;
  opt_cfg.weight_decay = train_cfg.weight_decay;
  OptimizerState model_state = make_optimizer_state(result.model.params(), opt_cfg);
  OptimizerState post_state;
  if (variational) post_state = make_optimizer_state(result.posterior->params(), opt_cfg);

  std::deque<LossBreakdown> tail;
  LossBreakdown last_finite;
  bool have_finite = false;

  auto collect_grads = [](const BackwardResult& back, const std::vector<NodeId>& ids,
                          const std::vector<Parameter>& params) {
    std::vector<Matrix> grads(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      grads[i] = back.has_grad(ids[i])
                     ? back.grad(ids[i])
                     : Matrix::Zero(params[i].values.rows(), params[i].values.cols());
    }
    return grads;
  };

  for (int it = 1; it <= train_cfg.iterations; ++it) {
    const CouplingBatch batch = sample_coupling(source, target, train_cfg.batch_size, rng);

    Tape tape;
    tape.reserve(160);
    LossBreakdown losses;
    NodeId total_node = -1;
    VelocityModel::Bound mbound = result.model.bind(tape);
    PosteriorModel::Bound pbound;
    if (variational) {
      pbound = result.posterior->bind(tape);
      const Matrix eps = rng.normal_matrix(train_cfg.batch_size, model_cfg.latent_dim);
      const VrfmLossNodes nodes = build_vrfm_loss(tape, result.model, mbound,
                                                  *result.posterior, pbound, batch,
                                                  train_cfg.kl_weight, eps);
      losses = {tape.value(nodes.recon)(0, 0), tape.value(nodes.kl)(0, 0),
                tape.value(nodes.total)(0, 0)};
      total_node = nodes.total;
    } else {
      total_node = build_rfm_loss(tape, result.model, mbound, batch);
      losses.recon = losses.total = tape.value(total_node)(0, 0);
    }

    if (!std::isfinite(losses.total)) {
      std::ostringstream os;
      os << "training diverged at iteration " << it;
      if (have_finite)
        os << " (last finite losses: recon=" << last_finite.recon
           << " kl=" << last_finite.kl << " total=" << last_finite.total << ")";
      throw NumericsError(os.str());
    }
    last_finite = losses;
    have_finite = true;

    const BackwardResult back = backward(tape, total_node);
    adamw_step(result.model.params(),
               collect_grads(back, mbound.param_ids, result.model.params()), model_state);
    if (variational)
      adamw_step(result.posterior->params(),
                 collect_grads(back, pbound.param_ids, result.posterior->params()),
                 post_state);

    tail.push_back(losses);
    if (tail.size() > 100) tail.pop_front();
    if (it % train_cfg.log_every == 0 || it == train_cfg.iterations)
      result.history.push_back({it, losses.recon, losses.kl, losses.total});
  }

  for (const LossBreakdown& l : tail) {
    result.final_losses.recon += l.recon / static_cast<double>(tail.size());
    result.final_losses.kl += l.kl / static_cast<double>(tail.size());
    result.final_losses.total += l.total / static_cast<double>(tail.size());
  }

  Checkpoint& ckpt = result.checkpoint;
  ckpt.objective = objective_name(train_cfg.objective);
  ckpt.task = source.dim == 2 ? "synthetic_2d" : "synthetic_1d";
  ckpt.source = source;
  ckpt.target = target;
  ckpt.model_cfg = model_cfg;
  ckpt.posterior_cfg = posterior_cfg;
  ckpt.train_cfg = train_cfg;
  ckpt.final_losses = result.final_losses;
  ckpt.seed = train_cfg.seed;
  for (const Parameter& p : result.model.params())
    ckpt.params.push_back({"velocity." + p.name, p.values, true});
  if (variational)
    for (const Parameter& p : result.posterior->params())
      ckpt.params.push_back({"posterior." + p.name, p.values, true});
  return result;
}

VelocityModel velocity_from_checkpoint(const Checkpoint& ckpt) {
  std::vector<Parameter> params;
  for (const Parameter& p : ckpt.params)
    if (p.name.rfind("velocity.", 0) == 0)
      params.push_back({p.name.substr(9), p.values, true});
  return VelocityModel::from_params(ckpt.model_cfg, std::move(params));
}

std::optional<PosteriorModel> posterior_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.posterior_cfg) return std::nullopt;
  std::vector<Parameter> params;
  for (const Parameter& p : ckpt.params)
    if (p.name.rfind("posterior.", 0) == 0)
      params.push_back({p.name.substr(10), p.values, true});
  return PosteriorModel::from_params(*ckpt.posterior_cfg, std::move(params));
}

}  // namespace vrfm
