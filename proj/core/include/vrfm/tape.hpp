#pragma once

#include <functional>
#include <span>
#include <vector>

#include "vrfm/common.hpp"

namespace vrfm {

// Reverse-mode autodiff over dense double matrices. A Tape records one
// forward computation as a flat list of nodes; inputs of a node always
// precede it, so the node index order is a topological order by construction.

enum class Op {
  kLeaf,
  kMatmul,
  kAdd,      // elementwise; second input may be a 1 x n row broadcast
  kMul,      // elementwise; second input may be a 1 x n row broadcast
  kConcat,   // column-wise, any arity
  kGelu,     // exact Gaussian-CDF form
  kSilu,
  kSquare,
  kMean,     // full reduction to 1 x 1
  kSum,      // full reduction to 1 x 1
  kLog,
  kExp,
  kScale,    // multiply by a scalar constant
  kClamp,    // elementwise clamp to [lo, hi]
  kSinEmbed, // sinusoidal embedding of each input column
};

const char* op_name(Op op);

using NodeId = int;
struct BackwardResult;

struct Node {
  Op op = Op::kLeaf;
  std::vector<NodeId> inputs;
  Matrix value;
  double attr0 = 0.0;  // scale factor / clamp lo / embed dim
  double attr1 = 0.0;  // clamp hi / embed max_period
  bool requires_grad = false;
};

class Tape {
 public:
  NodeId leaf(Matrix value, bool requires_grad = false);

  /// Generic entry point: validates shapes for `op` and appends a node whose
  /// cached value is the op applied to the input values.
  NodeId apply(Op op, std::span<const NodeId> inputs, double attr0 = 0.0,
               double attr1 = 0.0);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId concat(std::span<const NodeId> parts);
  NodeId gelu(NodeId x);
  NodeId silu(NodeId x);
  NodeId square(NodeId x);
  NodeId mean(NodeId x);
  NodeId sum(NodeId x);
  NodeId log(NodeId x);
  NodeId exp(NodeId x);
  NodeId scale(NodeId x, double factor);
  NodeId clamp(NodeId x, double lo, double hi);
  /// Embeds every column c of x as interleaved (sin(c*w_i), cos(c*w_i)) pairs,
  /// dim frequencies per column, w_i geometric from 1 down toward 1/max_period.
  NodeId sin_embed(NodeId x, int dim, double max_period);

  const Matrix& value(NodeId id) const { return nodes_.at(id).value; }
  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  NodeId check_id(NodeId id) const;
  std::vector<Node> nodes_;

  friend BackwardResult backward(const Tape& tape, NodeId loss);
};

struct BackwardResult {
  /// Gradient per node id; nodes that do not require grad (or are unreachable
  /// from the loss) keep an empty matrix.
  std::vector<Matrix> grads;
  /// Number of nodes visited by the reverse sweep; equals tape.size().
  std::size_t nodes_visited = 0;

  const Matrix& grad(NodeId id) const { return grads.at(id); }
  bool has_grad(NodeId id) const {
    return id >= 0 && id < static_cast<NodeId>(grads.size()) && grads[id].size() > 0;
  }
};

/// Reverse sweep from a scalar loss node. Visits every node exactly once in
/// reverse topological order and accumulates d(loss)/d(node) for every node
/// on a requires_grad path.
BackwardResult backward(const Tape& tape, NodeId loss);

/// Builds `f` on a fresh tape with `point` as a grad-enabled leaf and returns
/// the maximum over coordinates of the relative error between the autodiff
/// gradient and a central finite difference with step h. The relative error
/// uses denominator max(|a|, |b|, 1).
double grad_check(const std::function<NodeId(Tape&, NodeId)>& f,
                  const Matrix& point, double h);

// Shared math kernels (used by both the tape ops and the no-tape inference
// paths, so the two routes compute identical values).
Matrix gelu_forward(const Matrix& x);
Matrix gelu_backward(const Matrix& x);
Matrix silu_forward(const Matrix& x);
Matrix silu_backward(const Matrix& x);
Matrix sin_embed_forward(const Matrix& x, int dim, double max_period);

}  // namespace vrfm
