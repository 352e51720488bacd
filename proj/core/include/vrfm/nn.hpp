#pragma once

#include <string>
#include <vector>

#include "vrfm/tape.hpp"

namespace vrfm {

struct Parameter {
  std::string name;
  Matrix values;
  bool requires_grad = true;

  std::vector<Index> shape() const { return {values.rows(), values.cols()}; }
};

/// Append-only parameter list with unique names.
class ParamList {
 public:
  int add(std::string name, Matrix values);
  const std::vector<Parameter>& items() const { return params_; }
  std::vector<Parameter>& items() { return params_; }
  std::size_t size() const { return params_.size(); }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Parameter& operator[](std::size_t i) { return params_[i]; }

 private:
  std::vector<Parameter> params_;
};

/// Sinusoidal embedding of a scalar: interleaved (sin, cos) pairs over dim/2
/// geometrically spaced frequencies from 1 down toward 1/max_period.
RowVector sinusoidal_embed(double value, int dim, double max_period = 1e4);

/// Affine weight init: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), bias zero.
Matrix init_affine_weight(Rng& rng, Index fan_in, Index fan_out);

enum class Activation { kNone, kGelu, kSilu };

struct AffineNodes {
  NodeId weight;
  NodeId bias;
};

NodeId affine(Tape& tape, NodeId x, const AffineNodes& layer);

/// Applies affine layers in order with `act` after each one; the final
/// activation is applied only when `activate_last` is set. Throws ShapeError
/// if consecutive layer dimensions do not chain.
NodeId mlp_forward(Tape& tape, const std::vector<AffineNodes>& layers, NodeId input,
                   Activation act, bool activate_last);

}  // namespace vrfm
