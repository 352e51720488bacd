#include <doctest.h>

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vrfm/tape.hpp"

using namespace vrfm;

namespace {

Matrix m11(double v) { return Matrix::Constant(1, 1, v); }

Matrix row2(double a, double b) {
  Matrix m(1, 2);
  m << a, b;
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("tape");

TEST_CASE("add is elementwise") {
  Tape tape;
  const NodeId a = tape.leaf(row2(1, 2));
  const NodeId b = tape.leaf(row2(3, 4));
  const Matrix& out = tape.value(tape.add(a, b));
  CHECK(out(0, 0) == 4.0);
  CHECK(out(0, 1) == 6.0);
}

TEST_CASE("matmul identity is a no-op") {
  Tape tape;
  const NodeId eye = tape.leaf(Matrix::Identity(2, 2));
  const NodeId col = tape.leaf(row2(5, 7).transpose());
  const Matrix& out = tape.value(tape.matmul(eye, col));
  CHECK(out(0, 0) == 5.0);
  CHECK(out(1, 0) == 7.0);
}

TEST_CASE("gelu(0) = 0") {
  Tape tape;
  const Matrix& out = tape.value(tape.gelu(tape.leaf(m11(0.0))));
  CHECK(out(0, 0) == 0.0);
}

TEST_CASE("matmul shape mismatch names the op and dims") {
  Tape tape;
  const NodeId a = tape.leaf(Matrix::Zero(2, 3));
  const NodeId b = tape.leaf(Matrix::Zero(4, 2));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                       "matmul: inner dimensions mismatch (2x3 * 4x2)", ShapeError);
}

TEST_CASE("backward of x^2 at x=3 gives 6") {
  Tape tape;
  const NodeId x = tape.leaf(m11(3.0), true);
  const NodeId loss = tape.sum(tape.square(x));
  const BackwardResult back = backward(tape, loss);
  CHECK(back.grad(x)(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward of a constant mean has zero parameter gradients") {
  Tape tape;
  const NodeId x = tape.leaf(row2(1.0, 2.0), true);
  const NodeId c = tape.leaf(row2(5.0, -3.0));
  const NodeId loss = tape.mean(c);
  const BackwardResult back = backward(tape, loss);
  CHECK_FALSE(back.has_grad(x));
}

TEST_CASE("backward requires a scalar loss") {
  Tape tape;
  const NodeId x = tape.leaf(row2(1.0, 2.0), true);
  const NodeId y = tape.square(x);
  CHECK_THROWS_AS(backward(tape, y), ShapeError);
}

TEST_CASE("gelu gradient matches central finite differences at 1.5") {
  const double got =
      grad_check([](Tape& t, NodeId x) { return t.sum(t.gelu(x)); }, m11(1.5), 1e-5);
  CHECK(got < 1e-6);
}

TEST_CASE("grad_check: x*x at 2 is accurate, constants are exact") {
  const double quad =
      grad_check([](Tape& t, NodeId x) { return t.sum(t.mul(x, x)); }, m11(2.0), 1e-5);
  CHECK(quad < 1e-6);

  const double constant = grad_check(
      [](Tape& t, NodeId x) {
        (void)x;
        return t.leaf(m11(7.0));
      },
      m11(0.3), 1e-5);
  CHECK(constant == 0.0);
}

TEST_CASE("grad_check rejects non-positive h") {
  CHECK_THROWS_AS(grad_check([](Tape& t, NodeId x) { return t.sum(x); }, m11(1.0), 0.0),
                  Error);
}

TEST_CASE("backward visits every node exactly once") {
  Tape tape;
  const NodeId x = tape.leaf(row2(0.5, -0.25), true);
  const NodeId w = tape.leaf(Matrix::Identity(2, 2), true);
  const NodeId h = tape.gelu(tape.matmul(x, w));
  const NodeId loss = tape.mean(tape.square(h));
  const BackwardResult back = backward(tape, loss);
  CHECK(back.nodes_visited == tape.size());
}

TEST_CASE("every op matches finite differences at random points") {
  // 100+ random points spread over the full op set, double precision.
  Rng rng(20240211);
  struct OpCheck {
    const char* name;
    std::function<NodeId(Tape&, NodeId)> f;
    bool positive_only = false;
  };
  const std::vector<OpCheck> checks = {
      {"matmul",
       [](Tape& t, NodeId x) {
         const NodeId w =
             t.leaf(Matrix::Identity(3, 3) * 0.7 + Matrix::Constant(3, 3, 0.1));
         return t.sum(t.matmul(x, w));
       },
       false},
      {"add",
       [](Tape& t, NodeId x) {
         return t.sum(t.square(t.add(x, t.leaf(Matrix::Constant(4, 3, 0.25)))));
       },
       false},
      {"add_broadcast",
       [](Tape& t, NodeId x) {
         return t.sum(t.square(t.add(x, t.leaf(Matrix::Constant(1, 3, -0.5)))));
       },
       false},
      {"mul", [](Tape& t, NodeId x) { return t.sum(t.mul(x, x)); }, false},
      {"mul_broadcast",
       [](Tape& t, NodeId x) {
         return t.sum(t.mul(x, t.leaf(Matrix::Constant(1, 3, 1.5))));
       },
       false},
      {"concat",
       [](Tape& t, NodeId x) {
         const NodeId c = t.leaf(Matrix::Constant(4, 2, 2.0));
         const std::array parts{x, c, x};
         return t.sum(t.square(t.concat(parts)));
       },
       false},
      {"gelu", [](Tape& t, NodeId x) { return t.sum(t.gelu(x)); }, false},
      {"silu", [](Tape& t, NodeId x) { return t.sum(t.silu(x)); }, false},
      {"square", [](Tape& t, NodeId x) { return t.sum(t.square(x)); }, false},
      {"mean", [](Tape& t, NodeId x) { return t.mean(t.square(x)); }, false},
      {"log", [](Tape& t, NodeId x) { return t.sum(t.log(x)); }, true},
      {"exp", [](Tape& t, NodeId x) { return t.sum(t.exp(x)); }, false},
      {"scale", [](Tape& t, NodeId x) { return t.sum(t.square(t.scale(x, -2.5))); }, false},
      {"clamp", [](Tape& t, NodeId x) { return t.sum(t.clamp(x, -0.8, 0.8)); }, false},
      {"sin_embed",
       [](Tape& t, NodeId x) { return t.sum(t.square(t.sin_embed(x, 8, 100.0))); },
       false},
  };
  int points = 0;
  for (const OpCheck& check : checks) {
    for (int rep = 0; rep < 7; ++rep) {
      Matrix x = rng.normal_matrix(4, 3);
      if (check.positive_only) x = x.array().abs() + 0.5;
      if (std::string(check.name) == "clamp")
        x = x.unaryExpr([](double v) {
          return std::abs(std::abs(v) - 0.8) < 1e-3 ? v + 0.01 : v;
        });
      CAPTURE(check.name);
      CHECK(grad_check(check.f, x, 1e-5) < 1e-4);
      ++points;
    }
  }
  CHECK(points >= 100);
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [] {
    Tape tape;
    Rng rng(42);
    const NodeId x = tape.leaf(rng.normal_matrix(5, 4), true);
    const NodeId w = tape.leaf(rng.normal_matrix(4, 4), true);
    const NodeId loss = tape.mean(tape.square(tape.gelu(tape.matmul(x, w))));
    const BackwardResult back = backward(tape, loss);
    return std::pair(tape.value(loss)(0, 0), Matrix(back.grad(w)));
  };
  const auto [l1, g1] = run();
  const auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK((g1 - g2).norm() == 0.0);
}

TEST_SUITE_END();
