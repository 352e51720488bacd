#include <doctest.h>

#include <cmath>

#include "vrfm/nn.hpp"
#include "vrfm/optim.hpp"

using namespace vrfm;

TEST_SUITE_BEGIN("nn");

TEST_CASE("sinusoidal embed of 0 alternates sin/cos") {
  const RowVector e = sinusoidal_embed(0.0, 8, 1e4);
  for (int i = 0; i < 8; i += 2) {
    CHECK(e(i) == 0.0);
    CHECK(e(i + 1) == 1.0);
  }
}

TEST_CASE("sinusoidal embed with dim 2 is (sin v, cos v)") {
  const double v = 0.731;
  const RowVector e = sinusoidal_embed(v, 2, 1e4);
  CHECK(e(0) == doctest::Approx(std::sin(v)).epsilon(1e-15));
  CHECK(e(1) == doctest::Approx(std::cos(v)).epsilon(1e-15));
}

TEST_CASE("sinusoidal embed stays in [-1, 1] and rejects odd dims") {
  const RowVector e = sinusoidal_embed(0.5, 64, 1e4);
  CHECK(e.minCoeff() >= -1.0);
  CHECK(e.maxCoeff() <= 1.0);
  CHECK(e.size() == 64);
  CHECK_THROWS_AS(sinusoidal_embed(0.5, 7, 1e4), ShapeError);
}

TEST_CASE("sinusoidal frequencies are geometric from 1 downward") {
  const double v = 1.0;
  const RowVector e = sinusoidal_embed(v, 8, 16.0);
  // pair i uses w_i = 16^(-i/4): 1, 1/2, 1/4, 1/8
  const double ws[4] = {1.0, 0.5, 0.25, 0.125};
  for (int i = 0; i < 4; ++i) {
    CHECK(e(2 * i) == doctest::Approx(std::sin(v * ws[i])).epsilon(1e-12));
    CHECK(e(2 * i + 1) == doctest::Approx(std::cos(v * ws[i])).epsilon(1e-12));
  }
}

TEST_CASE("mlp with zero weights returns the bias") {
  Tape tape;
  const NodeId x = tape.leaf(Matrix::Constant(3, 4, 2.0));
  const AffineNodes layer{tape.leaf(Matrix::Zero(4, 2)),
                          tape.leaf(Matrix::Constant(1, 2, 0.75))};
  const NodeId out = mlp_forward(tape, {layer}, x, Activation::kNone, false);
  CHECK((tape.value(out).array() == 0.75).all());
}

TEST_CASE("single identity affine layer with no activation is the identity") {
  Tape tape;
  Rng rng(3);
  const Matrix input = rng.normal_matrix(5, 3);
  const NodeId x = tape.leaf(input);
  const AffineNodes layer{tape.leaf(Matrix::Identity(3, 3)), tape.leaf(Matrix::Zero(1, 3))};
  const NodeId out = mlp_forward(tape, {layer}, x, Activation::kNone, false);
  CHECK((tape.value(out) - input).norm() == 0.0);
}

TEST_CASE("mlp dimension chain break is reported") {
  Tape tape;
  const NodeId x = tape.leaf(Matrix::Zero(2, 4));
  const AffineNodes l1{tape.leaf(Matrix::Zero(4, 8)), tape.leaf(Matrix::Zero(1, 8))};
  const AffineNodes l2{tape.leaf(Matrix::Zero(9, 3)), tape.leaf(Matrix::Zero(1, 3))};
  CHECK_THROWS_AS(mlp_forward(tape, {l1, l2}, x, Activation::kGelu, false), ShapeError);
}

TEST_CASE("mlp forward is deterministic for a fixed seed") {
  auto run = [] {
    Rng rng(1234);
    Tape tape;
    const NodeId x = tape.leaf(rng.normal_matrix(4, 6));
    const AffineNodes l1{tape.leaf(init_affine_weight(rng, 6, 8)),
                         tape.leaf(Matrix::Zero(1, 8))};
    const AffineNodes l2{tape.leaf(init_affine_weight(rng, 8, 2)),
                         tape.leaf(Matrix::Zero(1, 2))};
    return Matrix(tape.value(mlp_forward(tape, {l1, l2}, x, Activation::kGelu, false)));
  };
  const Matrix a = run(), b = run();
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("adamw fixed point: zero grad, zero decay") {
  std::vector<Parameter> params{{"w", Matrix::Constant(2, 2, 1.5), true}};
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  OptimizerState st = make_optimizer_state(params, cfg);
  const Matrix before = params[0].values;
  for (int i = 0; i < 3; ++i)
    adamw_step(params, {Matrix::Zero(2, 2)}, st);
  CHECK((params[0].values - before).norm() == 0.0);
  CHECK(st.step == 3);
}

TEST_CASE("adamw decoupled decay: param 1.0 -> 0.99999") {
  std::vector<Parameter> params{{"w", Matrix::Constant(1, 1, 1.0), true}};
  AdamWConfig cfg;
  cfg.lr = 1e-3;
  cfg.weight_decay = 0.01;
  OptimizerState st = make_optimizer_state(params, cfg);
  adamw_step(params, {Matrix::Zero(1, 1)}, st);
  CHECK(params[0].values(0, 0) == doctest::Approx(0.99999).epsilon(1e-12));
}

TEST_CASE("adamw first step follows the sign of the gradient") {
  // Bias-corrected moments at step 1: update = -lr * g / (|g| + eps).
  for (const double g : {0.37, -2.0, 1e-3}) {
    std::vector<Parameter> params{{"w", Matrix::Constant(1, 1, 0.5), true}};
    AdamWConfig cfg;
    cfg.lr = 1e-3;
    cfg.weight_decay = 0.0;
    OptimizerState st = make_optimizer_state(params, cfg);
    adamw_step(params, {Matrix::Constant(1, 1, g)}, st);
    const double expected = 0.5 - cfg.lr * g / (std::abs(g) + cfg.epsilon);
    CHECK(params[0].values(0, 0) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("adamw rejects non-finite gradients by name") {
  std::vector<Parameter> params{{"encoder.weight", Matrix::Zero(1, 1), true}};
  OptimizerState st = make_optimizer_state(params, {});
  CHECK_THROWS_WITH_AS(
      adamw_step(params, {Matrix::Constant(1, 1, std::nan(""))}, st),
      "adamw_step: non-finite gradient for parameter encoder.weight", NumericsError);
}

TEST_CASE("parameter names must be unique") {
  ParamList list;
  list.add("w", Matrix::Zero(1, 1));
  CHECK_THROWS_AS(list.add("w", Matrix::Zero(1, 1)), Error);
}

TEST_SUITE_END();
