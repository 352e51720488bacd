#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vrfm/nn.hpp"

namespace vrfm {

struct VelocityModelConfig {
  int data_dim = 1;
  int hidden_dim = 64;
  int embed_dim = 64;
  int latent_dim = 0;  // 0 = baseline (no z input)
  int latent_hidden = 128;
  int decoder_layers = 4;
  double max_period = 1e4;
};

enum class Conditioning { kX0, kX1, kXt, kT };

std::string conditioning_name(Conditioning c);
Conditioning conditioning_from_name(const std::string& name);

struct PosteriorConfig {
  int data_dim = 1;
  int hidden_dim = 64;
  int embed_dim = 64;
  int latent_dim = 4;
  double max_period = 1e4;
  /// Nonempty subset of {x0, x1, xt, t}; stored in canonical order.
  std::vector<Conditioning> conditioning = {Conditioning::kX0, Conditioning::kX1,
                                            Conditioning::kXt};

  void validate() const;
};

struct LatentPosterior {
  Vector mu;
  Vector sigma;  // strictly positive by construction
};

/// z = mu + eps (.) sigma with eps ~ N(0, I).
Vector sample_latent(const LatentPosterior& post, Rng& rng);

/// KL( N(mu, diag sigma^2) || N(0, I) ) = sum_i 0.5 (mu_i^2 + sigma_i^2 - 1 - ln sigma_i^2).
double kl_standard_normal(const LatentPosterior& post);

// ---------------------------------------------------------------------------
// Velocity network v(x_t, t[, z]): sinusoidal embeddings of t and each data
// coordinate feed two-layer GeLU encoders; an optional three-layer latent
// module embeds z; the concatenated embeddings run through a GeLU MLP decoder.
// ---------------------------------------------------------------------------

class VelocityModel {
 public:
  VelocityModel() = default;
  static VelocityModel init(const VelocityModelConfig& cfg, Rng& rng);
  static VelocityModel from_params(const VelocityModelConfig& cfg,
                                   std::vector<Parameter> params);

  const VelocityModelConfig& config() const { return cfg_; }
  const std::vector<Parameter>& params() const { return params_.items(); }
  std::vector<Parameter>& params() { return params_.items(); }

  struct Bound {
    std::vector<NodeId> param_ids;
  };

  /// Inserts all parameters as tape leaves. When `substitute_index` >= 0 that
  /// parameter uses `substitute` instead of a fresh leaf (grad-check hook).
  Bound bind(Tape& tape, bool params_require_grad = true, int substitute_index = -1,
             NodeId substitute = -1) const;

  /// Tape forward pass on a batch: xt is n x data_dim, t is n x 1, z is
  /// n x latent_dim. z must be supplied iff latent_dim > 0.
  NodeId forward(Tape& tape, const Bound& bound, NodeId xt, NodeId t,
                 std::optional<NodeId> z = std::nullopt) const;

  /// No-tape forward pass; same kernels and evaluation order as the tape path.
  Matrix eval(const Matrix& xt, const Matrix& t, const Matrix* z = nullptr) const;

  /// Single-point convenience: v(xt, t[, z]).
  Vector velocity(const Vector& xt, double t, const Vector* z = nullptr) const;

 private:
  VelocityModelConfig cfg_;
  ParamList params_;
  // Layer index bookkeeping into params_ (layout fixed by init order).
  int t_enc_ = 0, x_enc_ = 0, z_enc_ = 0, decoder_ = 0;
  void index_layers();
};

// ---------------------------------------------------------------------------
// Posterior encoder q(z | conditioning): one two-layer GeLU encoder branch per
// configured input, concatenated, then a two-layer GeLU trunk with separate
// affine heads for mu and the raw log-sigma. sigma = exp(clamp(raw, -7, 2)).
// ---------------------------------------------------------------------------

class PosteriorModel {
 public:
  PosteriorModel() = default;
  static PosteriorModel init(const PosteriorConfig& cfg, Rng& rng);
  static PosteriorModel from_params(const PosteriorConfig& cfg,
                                    std::vector<Parameter> params);

  const PosteriorConfig& config() const { return cfg_; }
  const std::vector<Parameter>& params() const { return params_.items(); }
  std::vector<Parameter>& params() { return params_.items(); }

  struct Bound {
    std::vector<NodeId> param_ids;
  };
  struct Nodes {
    NodeId mu;
    NodeId raw;    // clamped log-sigma
    NodeId sigma;  // exp(raw)
  };

  Bound bind(Tape& tape, bool params_require_grad = true, int substitute_index = -1,
             NodeId substitute = -1) const;

  /// Tape forward pass; all four inputs are passed, but only the configured
  /// conditioning branches are read.
  Nodes forward(Tape& tape, const Bound& bound, NodeId x0, NodeId x1, NodeId xt,
                NodeId t) const;

  /// No-tape posterior for one batch; returns mu and sigma matrices.
  std::pair<Matrix, Matrix> eval(const Matrix& x0, const Matrix& x1, const Matrix& xt,
                                 const Matrix& t) const;

  static constexpr double kRawLogSigmaMin = -7.0;
  static constexpr double kRawLogSigmaMax = 2.0;

 private:
  PosteriorConfig cfg_;
  ParamList params_;
  std::vector<int> branch_start_;  // per conditioning branch
  int trunk_ = 0, mu_head_ = 0, sigma_head_ = 0;
  void index_layers();
};

}  // namespace vrfm
