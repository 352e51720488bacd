#include "vrfm/models.hpp"

#include <algorithm>
#include <cmath>

namespace vrfm {

namespace {

// Affine layers are stored as consecutive (weight, bias) parameter pairs.
AffineNodes layer_nodes(const std::vector<NodeId>& ids, int base, int layer) {
  return AffineNodes{ids[base + 2 * layer], ids[base + 2 * layer + 1]};
}

Matrix eval_affine(const Matrix& x, const Parameter& w, const Parameter& b) {
  Matrix h = x * w.values;
  h.rowwise() += b.values.row(0);
  return h;
}

Matrix eval_mlp(const std::vector<Parameter>& params, int base, int n_layers,
                const Matrix& input, bool activate_last) {
  Matrix h = input;
  for (int i = 0; i < n_layers; ++i) {
    h = eval_affine(h, params[base + 2 * i], params[base + 2 * i + 1]);
    if (i + 1 < n_layers || activate_last) h = gelu_forward(h);
  }
  return h;
}

void add_affine(ParamList& list, Rng& rng, const std::string& prefix, Index in, Index out) {
  list.add(prefix + ".weight", init_affine_weight(rng, in, out));
  list.add(prefix + ".bias", Matrix::Zero(1, out));
}

}  // namespace

std::string conditioning_name(Conditioning c) {
  switch (c) {
    case Conditioning::kX0: return "x0";
    case Conditioning::kX1: return "x1";
    case Conditioning::kXt: return "xt";
    case Conditioning::kT: return "t";
  }
  return "?";
}

Conditioning conditioning_from_name(const std::string& name) {
  if (name == "x0") return Conditioning::kX0;
  if (name == "x1") return Conditioning::kX1;
  if (name == "xt") return Conditioning::kXt;
  if (name == "t") return Conditioning::kT;
  throw ConfigError("unknown posterior conditioning input: " + name);
}

void PosteriorConfig::validate() const {
  if (conditioning.empty())
    throw ConfigError("posterior conditioning must not be empty");
  for (std::size_t i = 1; i < conditioning.size(); ++i)
    if (conditioning[i - 1] >= conditioning[i])
      throw ConfigError("posterior conditioning must be unique and in canonical order");
  if (latent_dim < 1) throw ConfigError("posterior latent_dim must be >= 1");
}

Vector sample_latent(const LatentPosterior& post, Rng& rng) {
  if (post.mu.size() != post.sigma.size())
    throw ShapeError("sample_latent: mu/sigma length mismatch");
  Vector z(post.mu.size());
  for (Index i = 0; i < z.size(); ++i) z(i) = post.mu(i) + rng.normal() * post.sigma(i);
  return z;
}

double kl_standard_normal(const LatentPosterior& post) {
  if (post.mu.size() != post.sigma.size())
    throw ShapeError("kl_standard_normal: mu/sigma length mismatch");
  double acc = 0.0;
  for (Index i = 0; i < post.mu.size(); ++i) {
    const double s2 = post.sigma(i) * post.sigma(i);
    acc += 0.5 * (post.mu(i) * post.mu(i) + s2 - 1.0 - std::log(s2));
  }
  return acc;
}

// ------------------------------- VelocityModel ------------------------------

void VelocityModel::index_layers() {
  t_enc_ = 0;
  x_enc_ = 4;
  z_enc_ = 8;
  decoder_ = cfg_.latent_dim > 0 ? 14 : 8;
}

VelocityModel VelocityModel::init(const VelocityModelConfig& cfg, Rng& rng) {
  if (cfg.data_dim < 1) throw ConfigError("velocity model data_dim must be >= 1");
  if (cfg.decoder_layers < 2) throw ConfigError("velocity model needs >= 2 decoder layers");
  if (cfg.embed_dim < 2 || cfg.embed_dim % 2 != 0)
    throw ConfigError("velocity model embed_dim must be even and >= 2");

  VelocityModel m;
  m.cfg_ = cfg;
  add_affine(m.params_, rng, "t_enc.0", cfg.embed_dim, cfg.hidden_dim);
  add_affine(m.params_, rng, "t_enc.1", cfg.hidden_dim, cfg.hidden_dim);
  add_affine(m.params_, rng, "x_enc.0", static_cast<Index>(cfg.data_dim) * cfg.embed_dim,
             cfg.hidden_dim);
  add_affine(m.params_, rng, "x_enc.1", cfg.hidden_dim, cfg.hidden_dim);
  if (cfg.latent_dim > 0) {
    add_affine(m.params_, rng, "z_enc.0", cfg.latent_dim, cfg.latent_hidden);
    add_affine(m.params_, rng, "z_enc.1", cfg.latent_hidden, cfg.latent_hidden);
    add_affine(m.params_, rng, "z_enc.2", cfg.latent_hidden, cfg.hidden_dim);
  }
  const int streams = cfg.latent_dim > 0 ? 3 : 2;
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    const Index in = (i == 0) ? static_cast<Index>(streams) * cfg.hidden_dim : cfg.hidden_dim;
    const Index out = (i + 1 == cfg.decoder_layers) ? cfg.data_dim : cfg.hidden_dim;
    add_affine(m.params_, rng, "decoder." + std::to_string(i), in, out);
  }
  m.index_layers();
  return m;
}

VelocityModel VelocityModel::from_params(const VelocityModelConfig& cfg,
                                         std::vector<Parameter> params) {
  Rng scratch(0);
  VelocityModel ref = init(cfg, scratch);
  if (params.size() != ref.params_.size())
    throw IoError("velocity model: expected " + std::to_string(ref.params_.size()) +
                  " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& want = ref.params_[i];
    if (params[i].name != want.name || params[i].values.rows() != want.values.rows() ||
        params[i].values.cols() != want.values.cols())
      throw IoError("velocity model: parameter mismatch at '" + params[i].name + "'");
    ref.params_[i].values = std::move(params[i].values);
  }
  return ref;
}

VelocityModel::Bound VelocityModel::bind(Tape& tape, bool params_require_grad,
                                         int substitute_index, NodeId substitute) const {
  Bound bound;
  bound.param_ids.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (static_cast<int>(i) == substitute_index)
      bound.param_ids.push_back(substitute);
    else
      bound.param_ids.push_back(tape.leaf(params_[i].values, params_require_grad));
  }
  return bound;
}

NodeId VelocityModel::forward(Tape& tape, const Bound& bound, NodeId xt, NodeId t,
                              std::optional<NodeId> z) const {
  // Note: values are read by id, never held by reference, because creating
  // nodes below may reallocate the tape's storage.
  const Index n_rows = tape.value(xt).rows();
  if (tape.value(xt).cols() != cfg_.data_dim)
    throw ShapeError("velocity forward: xt has " + std::to_string(tape.value(xt).cols()) +
                     " columns, expected " + std::to_string(cfg_.data_dim));
  if (tape.value(t).cols() != 1 || tape.value(t).rows() != n_rows)
    throw ShapeError("velocity forward: t must be a column matching xt rows");
  if (cfg_.latent_dim > 0 && !z)
    throw Error("velocity forward: model has latent_dim > 0 but no z was supplied");
  if (cfg_.latent_dim == 0 && z)
    throw Error("velocity forward: baseline model (latent_dim = 0) does not accept z");

  auto two_layer = [&](int base, NodeId input) {
    return mlp_forward(tape, {layer_nodes(bound.param_ids, base, 0),
                              layer_nodes(bound.param_ids, base, 1)},
                       input, Activation::kGelu, /*activate_last=*/true);
  };

  const NodeId t_emb = tape.sin_embed(t, cfg_.embed_dim, cfg_.max_period);
  const NodeId t_h = two_layer(t_enc_, t_emb);
  const NodeId x_emb = tape.sin_embed(xt, cfg_.embed_dim, cfg_.max_period);
  const NodeId x_h = two_layer(x_enc_, x_emb);

  std::vector<NodeId> streams = {t_h, x_h};
  if (cfg_.latent_dim > 0) {
    if (tape.value(*z).cols() != cfg_.latent_dim || tape.value(*z).rows() != n_rows)
      throw ShapeError("velocity forward: z must be n x latent_dim");
    NodeId h = *z;
    for (int i = 0; i < 3; ++i) {
      h = affine(tape, h, layer_nodes(bound.param_ids, z_enc_, i));
      h = tape.gelu(h);
    }
    streams.push_back(h);
  }

  NodeId h = tape.concat(streams);
  std::vector<AffineNodes> dec;
  dec.reserve(cfg_.decoder_layers);
  for (int i = 0; i < cfg_.decoder_layers; ++i)
    dec.push_back(layer_nodes(bound.param_ids, decoder_, i));
  return mlp_forward(tape, dec, h, Activation::kGelu, /*activate_last=*/false);
}

Matrix VelocityModel::eval(const Matrix& xt, const Matrix& t, const Matrix* z) const {
  if (xt.cols() != cfg_.data_dim)
    throw ShapeError("velocity eval: xt has " + std::to_string(xt.cols()) +
                     " columns, expected " + std::to_string(cfg_.data_dim));
  if (t.cols() != 1 || t.rows() != xt.rows())
    throw ShapeError("velocity eval: t must be a column matching xt rows");
  if (cfg_.latent_dim > 0 && z == nullptr)
    throw Error("velocity eval: model has latent_dim > 0 but no z was supplied");
  if (cfg_.latent_dim == 0 && z != nullptr)
    throw Error("velocity eval: baseline model (latent_dim = 0) does not accept z");

  const auto& p = params_.items();
  Matrix t_h = eval_mlp(p, t_enc_, 2, sin_embed_forward(t, cfg_.embed_dim, cfg_.max_period), true);
  Matrix x_h = eval_mlp(p, x_enc_, 2, sin_embed_forward(xt, cfg_.embed_dim, cfg_.max_period), true);

  Matrix h;
  if (cfg_.latent_dim > 0) {
    if (z->cols() != cfg_.latent_dim || z->rows() != xt.rows())
      throw ShapeError("velocity eval: z must be n x latent_dim");
    Matrix z_h = eval_mlp(p, z_enc_, 3, *z, true);
    h.resize(xt.rows(), t_h.cols() + x_h.cols() + z_h.cols());
    h << t_h, x_h, z_h;
  } else {
    h.resize(xt.rows(), t_h.cols() + x_h.cols());
    h << t_h, x_h;
  }
  return eval_mlp(p, decoder_, cfg_.decoder_layers, h, false);
}

Vector VelocityModel::velocity(const Vector& xt, double t, const Vector* z) const {
  Matrix xm = xt.transpose();
  Matrix tm(1, 1);
  tm(0, 0) = t;
  if (z) {
    Matrix zm = z->transpose();
    return eval(xm, tm, &zm).row(0);
  }
  return eval(xm, tm, nullptr).row(0);
}

// ------------------------------ PosteriorModel ------------------------------

void PosteriorModel::index_layers() {
  branch_start_.clear();
  int at = 0;
  for (std::size_t i = 0; i < cfg_.conditioning.size(); ++i) {
    branch_start_.push_back(at);
    at += 4;  // two affine layers per branch
  }
  trunk_ = at;
  mu_head_ = at + 4;
  sigma_head_ = at + 6;
}

PosteriorModel PosteriorModel::init(const PosteriorConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.embed_dim < 2 || cfg.embed_dim % 2 != 0)
    throw ConfigError("posterior embed_dim must be even and >= 2");

  PosteriorModel m;
  m.cfg_ = cfg;
  for (Conditioning c : cfg.conditioning) {
    const Index in_dim = (c == Conditioning::kT) ? 1 : cfg.data_dim;
    const std::string prefix = "enc_" + conditioning_name(c);
    add_affine(m.params_, rng, prefix + ".0", in_dim * cfg.embed_dim, cfg.hidden_dim);
    add_affine(m.params_, rng, prefix + ".1", cfg.hidden_dim, cfg.hidden_dim);
  }
  const Index cat = static_cast<Index>(cfg.conditioning.size()) * cfg.hidden_dim;
  add_affine(m.params_, rng, "head.0", cat, cfg.hidden_dim);
  add_affine(m.params_, rng, "head.1", cfg.hidden_dim, cfg.hidden_dim);
  add_affine(m.params_, rng, "head.mu", cfg.hidden_dim, cfg.latent_dim);
  add_affine(m.params_, rng, "head.logsigma", cfg.hidden_dim, cfg.latent_dim);
  m.index_layers();
  return m;
}

PosteriorModel PosteriorModel::from_params(const PosteriorConfig& cfg,
                                           std::vector<Parameter> params) {
  Rng scratch(0);
  PosteriorModel ref = init(cfg, scratch);
  if (params.size() != ref.params_.size())
    throw IoError("posterior model: expected " + std::to_string(ref.params_.size()) +
                  " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& want = ref.params_[i];
    if (params[i].name != want.name || params[i].values.rows() != want.values.rows() ||
        params[i].values.cols() != want.values.cols())
      throw IoError("posterior model: parameter mismatch at '" + params[i].name + "'");
    ref.params_[i].values = std::move(params[i].values);
  }
  return ref;
}

PosteriorModel::Bound PosteriorModel::bind(Tape& tape, bool params_require_grad,
                                           int substitute_index, NodeId substitute) const {
  Bound bound;
  bound.param_ids.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (static_cast<int>(i) == substitute_index)
      bound.param_ids.push_back(substitute);
    else
      bound.param_ids.push_back(tape.leaf(params_[i].values, params_require_grad));
  }
  return bound;
}

PosteriorModel::Nodes PosteriorModel::forward(Tape& tape, const Bound& bound, NodeId x0,
                                              NodeId x1, NodeId xt, NodeId t) const {
  auto pick = [&](Conditioning c) {
    switch (c) {
      case Conditioning::kX0: return x0;
      case Conditioning::kX1: return x1;
      case Conditioning::kXt: return xt;
      case Conditioning::kT: return t;
    }
    throw Error("unreachable");
  };

  std::vector<NodeId> branches;
  for (std::size_t i = 0; i < cfg_.conditioning.size(); ++i) {
    const NodeId input = pick(cfg_.conditioning[i]);
    const NodeId emb = tape.sin_embed(input, cfg_.embed_dim, cfg_.max_period);
    branches.push_back(mlp_forward(tape,
                                   {layer_nodes(bound.param_ids, branch_start_[i], 0),
                                    layer_nodes(bound.param_ids, branch_start_[i], 1)},
                                   emb, Activation::kGelu, true));
  }
  NodeId h = tape.concat(branches);
  h = mlp_forward(tape,
                  {layer_nodes(bound.param_ids, trunk_, 0),
                   layer_nodes(bound.param_ids, trunk_, 1)},
                  h, Activation::kGelu, true);

  Nodes out;
  out.mu = affine(tape, h, layer_nodes(bound.param_ids, mu_head_, 0));
  const NodeId raw_unclamped = affine(tape, h, layer_nodes(bound.param_ids, sigma_head_, 0));
  out.raw = tape.clamp(raw_unclamped, kRawLogSigmaMin, kRawLogSigmaMax);
  out.sigma = tape.exp(out.raw);
  return out;
}

std::pair<Matrix, Matrix> PosteriorModel::eval(const Matrix& x0, const Matrix& x1,
                                               const Matrix& xt, const Matrix& t) const {
  const auto& p = params_.items();
  auto pick = [&](Conditioning c) -> const Matrix& {
    switch (c) {
      case Conditioning::kX0: return x0;
      case Conditioning::kX1: return x1;
      case Conditioning::kXt: return xt;
      case Conditioning::kT: return t;
    }
    throw Error("unreachable");
  };

  Matrix h(x0.rows(), static_cast<Index>(cfg_.conditioning.size()) * cfg_.hidden_dim);
  for (std::size_t i = 0; i < cfg_.conditioning.size(); ++i) {
    const Matrix emb = sin_embed_forward(pick(cfg_.conditioning[i]), cfg_.embed_dim,
                                         cfg_.max_period);
    h.middleCols(static_cast<Index>(i) * cfg_.hidden_dim, cfg_.hidden_dim) =
        eval_mlp(p, branch_start_[i], 2, emb, true);
  }
  h = eval_mlp(p, trunk_, 2, h, true);
  Matrix mu = eval_affine(h, p[mu_head_], p[mu_head_ + 1]);
  Matrix raw = eval_affine(h, p[sigma_head_], p[sigma_head_ + 1]);
  raw = raw.array().max(kRawLogSigmaMin).min(kRawLogSigmaMax);
  return {mu, raw.array().exp().matrix()};
}

}  // namespace vrfm
