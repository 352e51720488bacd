#include "vrfm/tape.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace vrfm {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::string dims(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

bool row_broadcastable(const Matrix& a, const Matrix& b) {
  return b.rows() == 1 && b.cols() == a.cols() && a.rows() > 1;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kMul: return "mul";
    case Op::kConcat: return "concat";
    case Op::kGelu: return "gelu";
    case Op::kSilu: return "silu";
    case Op::kSquare: return "square";
    case Op::kMean: return "mean";
    case Op::kSum: return "sum";
    case Op::kLog: return "log";
    case Op::kExp: return "exp";
    case Op::kScale: return "scale";
    case Op::kClamp: return "clamp";
    case Op::kSinEmbed: return "sin_embed";
  }
  return "?";
}

Matrix gelu_forward(const Matrix& x) {
  return x.unaryExpr([](double v) {
    return v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
  });
}

Matrix gelu_backward(const Matrix& x) {
  const auto xa = x.array();
  const Eigen::ArrayXXd cdf =
      xa.unaryExpr([](double v) { return 0.5 * (1.0 + std::erf(v * kInvSqrt2)); });
  return cdf + xa * (-0.5 * xa.square()).exp() * kInvSqrt2Pi;
}

Matrix silu_forward(const Matrix& x) {
  return x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
}

Matrix silu_backward(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return s * (1.0 + v * (1.0 - s));
  });
}

Matrix sin_embed_forward(const Matrix& x, int dim, double max_period) {
  const int half = dim / 2;
  Matrix out(x.rows(), x.cols() * dim);
  for (Index c = 0; c < x.cols(); ++c) {
    for (int i = 0; i < half; ++i) {
      const double w = std::exp(-std::log(max_period) * static_cast<double>(i) /
                                static_cast<double>(half));
      const Eigen::ArrayXd arg = x.col(c).array() * w;
      out.col(c * dim + 2 * i) = arg.sin();
      out.col(c * dim + 2 * i + 1) = arg.cos();
    }
  }
  return out;
}

NodeId Tape::check_id(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size()))
    throw ShapeError("tape: input node id " + std::to_string(id) + " out of range");
  return id;
}

NodeId Tape::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

NodeId Tape::apply(Op op, std::span<const NodeId> inputs, double attr0, double attr1) {
  for (NodeId id : inputs) check_id(id);
  Node n;
  n.op = op;
  n.inputs.assign(inputs.begin(), inputs.end());
  n.attr0 = attr0;
  n.attr1 = attr1;
  for (NodeId id : inputs) n.requires_grad |= nodes_[id].requires_grad;

  auto expect_arity = [&](std::size_t k) {
    if (inputs.size() != k)
      throw ShapeError(std::string(op_name(op)) + ": expected " + std::to_string(k) +
                       " inputs, got " + std::to_string(inputs.size()));
  };

  switch (op) {
    case Op::kLeaf:
      throw ShapeError("leaf nodes are created via Tape::leaf");
    case Op::kMatmul: {
      expect_arity(2);
      const Matrix& a = nodes_[inputs[0]].value;
      const Matrix& b = nodes_[inputs[1]].value;
      if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions mismatch (" + dims(a) + " * " + dims(b) + ")");
      n.value.noalias() = a * b;
      break;
    }
    case Op::kAdd:
    case Op::kMul: {
      expect_arity(2);
      const Matrix& a = nodes_[inputs[0]].value;
      const Matrix& b = nodes_[inputs[1]].value;
      const bool same = a.rows() == b.rows() && a.cols() == b.cols();
      if (!same && !row_broadcastable(a, b))
        throw ShapeError(std::string(op_name(op)) + ": shapes " + dims(a) + " and " + dims(b) +
                         " are neither equal nor row-broadcastable");
      if (op == Op::kAdd) {
        if (same)
          n.value = a + b;
        else
          n.value = a.rowwise() + b.row(0);
      } else {
        if (same)
          n.value = a.cwiseProduct(b);
        else
          n.value = (a.array().rowwise() * b.row(0).array()).matrix();
      }
      break;
    }
    case Op::kConcat: {
      if (inputs.empty()) throw ShapeError("concat: needs at least one input");
      const Index rows = nodes_[inputs[0]].value.rows();
      Index cols = 0;
      for (NodeId id : inputs) {
        if (nodes_[id].value.rows() != rows)
          throw ShapeError("concat: row mismatch (" + dims(nodes_[inputs[0]].value) + " vs " +
                           dims(nodes_[id].value) + ")");
        cols += nodes_[id].value.cols();
      }
      n.value.resize(rows, cols);
      Index at = 0;
      for (NodeId id : inputs) {
        const Matrix& part = nodes_[id].value;
        n.value.middleCols(at, part.cols()) = part;
        at += part.cols();
      }
      break;
    }
    case Op::kGelu:
      expect_arity(1);
      n.value = gelu_forward(nodes_[inputs[0]].value);
      break;
    case Op::kSilu:
      expect_arity(1);
      n.value = silu_forward(nodes_[inputs[0]].value);
      break;
    case Op::kSquare:
      expect_arity(1);
      n.value = nodes_[inputs[0]].value.array().square();
      break;
    case Op::kMean:
      expect_arity(1);
      n.value = Matrix::Constant(1, 1, nodes_[inputs[0]].value.mean());
      break;
    case Op::kSum:
      expect_arity(1);
      n.value = Matrix::Constant(1, 1, nodes_[inputs[0]].value.sum());
      break;
    case Op::kLog:
      expect_arity(1);
      n.value = nodes_[inputs[0]].value.array().log();
      break;
    case Op::kExp:
      expect_arity(1);
      n.value = nodes_[inputs[0]].value.array().exp();
      break;
    case Op::kScale:
      expect_arity(1);
      n.value = nodes_[inputs[0]].value * attr0;
      break;
    case Op::kClamp:
      expect_arity(1);
      if (!(attr0 <= attr1))
        throw ShapeError("clamp: lo must not exceed hi");
      n.value = nodes_[inputs[0]].value.array().max(attr0).min(attr1);
      break;
    case Op::kSinEmbed: {
      expect_arity(1);
      const int dim = static_cast<int>(attr0);
      if (dim < 2 || dim % 2 != 0)
        throw ShapeError("sin_embed: dim must be even and >= 2, got " + std::to_string(dim));
      if (!(attr1 > 0.0)) throw ShapeError("sin_embed: max_period must be positive");
      n.value = sin_embed_forward(nodes_[inputs[0]].value, dim, attr1);
      break;
    }
  }

  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

NodeId Tape::matmul(NodeId a, NodeId b) { return apply(Op::kMatmul, std::array{a, b}); }
NodeId Tape::add(NodeId a, NodeId b) { return apply(Op::kAdd, std::array{a, b}); }
NodeId Tape::mul(NodeId a, NodeId b) { return apply(Op::kMul, std::array{a, b}); }
NodeId Tape::concat(std::span<const NodeId> parts) { return apply(Op::kConcat, parts); }
NodeId Tape::gelu(NodeId x) { return apply(Op::kGelu, std::array{x}); }
NodeId Tape::silu(NodeId x) { return apply(Op::kSilu, std::array{x}); }
NodeId Tape::square(NodeId x) { return apply(Op::kSquare, std::array{x}); }
NodeId Tape::mean(NodeId x) { return apply(Op::kMean, std::array{x}); }
NodeId Tape::sum(NodeId x) { return apply(Op::kSum, std::array{x}); }
NodeId Tape::log(NodeId x) { return apply(Op::kLog, std::array{x}); }
NodeId Tape::exp(NodeId x) { return apply(Op::kExp, std::array{x}); }
NodeId Tape::scale(NodeId x, double factor) { return apply(Op::kScale, std::array{x}, factor); }
NodeId Tape::clamp(NodeId x, double lo, double hi) { return apply(Op::kClamp, std::array{x}, lo, hi); }
NodeId Tape::sin_embed(NodeId x, int dim, double max_period) {
  return apply(Op::kSinEmbed, std::array{x}, static_cast<double>(dim), max_period);
}

BackwardResult backward(const Tape& tape, NodeId loss) {
  if (loss < 0 || loss >= static_cast<NodeId>(tape.size()))
    throw ShapeError("backward: loss node id out of range");
  const Matrix& lv = tape.value(loss);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ShapeError("backward: loss must be a 1x1 scalar, got " +
                     std::to_string(lv.rows()) + "x" + std::to_string(lv.cols()));

  const auto& nodes = tape.nodes_;
  BackwardResult result;
  result.grads.resize(nodes.size());

  // First touch assigns, later touches accumulate; expressions evaluate
  // directly into the gradient buffer.
  auto accum = [&](NodeId id, const auto& g) {
    if (!nodes[id].requires_grad) return;
    if (result.grads[id].size() == 0)
      result.grads[id] = g;
    else
      result.grads[id] += g;
  };

  // Reduce an upstream gradient to a 1 x n row when input b was broadcast.
  auto accum_maybe_broadcast = [&](NodeId id, const auto& g) {
    if (!nodes[id].requires_grad) return;
    const Matrix& bv = nodes[id].value;
    if (bv.rows() == 1 && g.rows() > 1)
      accum(id, g.colwise().sum().eval());
    else
      accum(id, g);
  };

  result.grads[loss] = Matrix::Constant(1, 1, 1.0);

  static double op_ms[32] = {};
  static long op_calls = 0;
  for (NodeId id = static_cast<NodeId>(nodes.size()) - 1; id >= 0; --id) {
    ++result.nodes_visited;
    const Node& n = nodes[id];
    struct T {
      double* slot;
      std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
      ~T() { *slot += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() * 1e3; }
    } timer{&op_ms[static_cast<int>(n.op)]};
    if (++op_calls % 2000000 == 0) {
      for (int k = 0; k < 16; ++k)
        if (op_ms[k] > 0.01) std::fprintf(stderr, "op %d: %.1f ms\n", k, op_ms[k]);
    }
    if (n.op == Op::kLeaf || !n.requires_grad) continue;
    if (result.grads[id].size() == 0) continue;  // not on a path to the loss
    const Matrix& g = result.grads[id];

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        const Matrix& a = nodes[n.inputs[0]].value;
        const Matrix& b = nodes[n.inputs[1]].value;
        if (nodes[n.inputs[0]].requires_grad) accum(n.inputs[0], g * b.transpose());
        if (nodes[n.inputs[1]].requires_grad) accum(n.inputs[1], a.transpose() * g);
        break;
      }
      case Op::kAdd:
        accum(n.inputs[0], g);
        accum_maybe_broadcast(n.inputs[1], g);
        break;
      case Op::kMul: {
        const Matrix& a = nodes[n.inputs[0]].value;
        const Matrix& b = nodes[n.inputs[1]].value;
        const bool bcast = b.rows() == 1 && a.rows() > 1;
        if (nodes[n.inputs[0]].requires_grad) {
          if (bcast)
            accum(n.inputs[0], (g.array().rowwise() * b.row(0).array()).matrix());
          else
            accum(n.inputs[0], g.cwiseProduct(b));
        }
        if (nodes[n.inputs[1]].requires_grad)
          accum_maybe_broadcast(n.inputs[1], g.cwiseProduct(a));
        break;
      }
      case Op::kConcat: {
        Index at = 0;
        for (NodeId in : n.inputs) {
          const Index w = nodes[in].value.cols();
          accum(in, g.middleCols(at, w));
          at += w;
        }
        break;
      }
      case Op::kGelu:
        accum(n.inputs[0], g.cwiseProduct(gelu_backward(nodes[n.inputs[0]].value)));
        break;
      case Op::kSilu:
        accum(n.inputs[0], g.cwiseProduct(silu_backward(nodes[n.inputs[0]].value)));
        break;
      case Op::kSquare:
        accum(n.inputs[0], (g.array() * 2.0 * nodes[n.inputs[0]].value.array()).matrix());
        break;
      case Op::kMean: {
        const Matrix& in = nodes[n.inputs[0]].value;
        const double scale = g(0, 0) / static_cast<double>(in.size());
        accum(n.inputs[0], Matrix::Constant(in.rows(), in.cols(), scale));
        break;
      }
      case Op::kSum: {
        const Matrix& in = nodes[n.inputs[0]].value;
        accum(n.inputs[0], Matrix::Constant(in.rows(), in.cols(), g(0, 0)));
        break;
      }
      case Op::kLog:
        accum(n.inputs[0], g.cwiseQuotient(nodes[n.inputs[0]].value));
        break;
      case Op::kExp:
        accum(n.inputs[0], g.cwiseProduct(n.value));
        break;
      case Op::kScale:
        accum(n.inputs[0], g * n.attr0);
        break;
      case Op::kClamp: {
        const Matrix& in = nodes[n.inputs[0]].value;
        const double lo = n.attr0, hi = n.attr1;
        Matrix gated = g;
        for (Index i = 0; i < in.rows(); ++i)
          for (Index j = 0; j < in.cols(); ++j)
            if (!(in(i, j) > lo && in(i, j) < hi)) gated(i, j) = 0.0;
        accum(n.inputs[0], gated);
        break;
      }
      case Op::kSinEmbed: {
        const Matrix& in = nodes[n.inputs[0]].value;
        const int dim = static_cast<int>(n.attr0);
        const int half = dim / 2;
        Matrix gin = Matrix::Zero(in.rows(), in.cols());
        for (Index c = 0; c < in.cols(); ++c) {
          for (int i = 0; i < half; ++i) {
            const double w = std::exp(-std::log(n.attr1) * static_cast<double>(i) /
                                      static_cast<double>(half));
            const Eigen::ArrayXd arg = in.col(c).array() * w;
            gin.col(c) += (g.col(c * dim + 2 * i).array() * arg.cos() * w -
                           g.col(c * dim + 2 * i + 1).array() * arg.sin() * w)
                              .matrix();
          }
        }
        accum(n.inputs[0], gin);
        break;
      }
    }
  }
  return result;
}

double grad_check(const std::function<NodeId(Tape&, NodeId)>& f,
                  const Matrix& point, double h) {
  if (!(h > 0.0)) throw Error("grad_check: h must be positive");

  Tape tape;
  const NodeId x = tape.leaf(point, /*requires_grad=*/true);
  const NodeId loss = f(tape, x);
  const BackwardResult back = backward(tape, loss);
  Matrix auto_grad = back.has_grad(x)
                         ? back.grad(x)
                         : Matrix::Zero(point.rows(), point.cols());

  auto eval_at = [&](const Matrix& p) {
    Tape t;
    const NodeId xp = t.leaf(p, false);
    const NodeId l = f(t, xp);
    return t.value(l)(0, 0);
  };

  double worst = 0.0;
  Matrix p = point;
  for (Index i = 0; i < point.rows(); ++i) {
    for (Index j = 0; j < point.cols(); ++j) {
      const double keep = p(i, j);
      p(i, j) = keep + h;
      const double up = eval_at(p);
      p(i, j) = keep - h;
      const double dn = eval_at(p);
      p(i, j) = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double ad = auto_grad(i, j);
      const double denom = std::max({std::abs(fd), std::abs(ad), 1.0});
      worst = std::max(worst, std::abs(fd - ad) / denom);
    }
  }
  return worst;
}

}  // namespace vrfm
