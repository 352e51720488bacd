#include "vrfm/nn.hpp"

#include <cmath>

namespace vrfm {

int ParamList::add(std::string name, Matrix values) {
  for (const Parameter& p : params_)
    if (p.name == name) throw Error("duplicate parameter name: " + name);
  params_.push_back(Parameter{std::move(name), std::move(values), true});
  return static_cast<int>(params_.size()) - 1;
}

RowVector sinusoidal_embed(double value, int dim, double max_period) {
  if (dim < 2 || dim % 2 != 0)
    throw ShapeError("sinusoidal_embed: dim must be even and >= 2, got " + std::to_string(dim));
  Matrix v(1, 1);
  v(0, 0) = value;
  return sin_embed_forward(v, dim, max_period).row(0);
}

Matrix init_affine_weight(Rng& rng, Index fan_in, Index fan_out) {
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng.uniform_matrix(fan_in, fan_out, -s, s);
}

NodeId affine(Tape& tape, NodeId x, const AffineNodes& layer) {
  return tape.add(tape.matmul(x, layer.weight), layer.bias);
}

NodeId mlp_forward(Tape& tape, const std::vector<AffineNodes>& layers, NodeId input,
                   Activation act, bool activate_last) {
  if (layers.empty()) throw ShapeError("mlp_forward: no layers");
  NodeId h = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Matrix& w = tape.value(layers[i].weight);
    if (tape.value(h).cols() != w.rows())
      throw ShapeError("mlp_forward: dimension chain break at layer " + std::to_string(i) +
                       " (input cols " + std::to_string(tape.value(h).cols()) +
                       " vs weight rows " + std::to_string(w.rows()) + ")");
    h = affine(tape, h, layers[i]);
    const bool last = (i + 1 == layers.size());
    if (!last || activate_last) {
      if (act == Activation::kGelu) h = tape.gelu(h);
      else if (act == Activation::kSilu) h = tape.silu(h);
    }
  }
  return h;
}

}  // namespace vrfm
