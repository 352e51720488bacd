#include <doctest.h>

#include <cmath>
#include <string>

#include "vrfm/distributions.hpp"

using namespace vrfm;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
}

}  // namespace

TEST_SUITE_BEGIN("distributions");

TEST_CASE("builtin specs match the synthetic setups") {
  const DistributionSpec src = builtin_spec("source_1d");
  CHECK(src.components.size() == 1);
  CHECK(src.components[0].mean(0) == 0.0);
  CHECK(src.components[0].stddev == 1.0);

  const DistributionSpec tgt = builtin_spec("target_1d_bimodal");
  REQUIRE(tgt.components.size() == 2);
  CHECK(tgt.components[0].mean(0) == -1.0);
  CHECK(tgt.components[1].mean(0) == 1.0);
  CHECK(tgt.components[0].weight == 0.5);
  CHECK(tgt.components[1].weight == 0.5);

  const DistributionSpec circ = builtin_spec("source_2d_circle");
  REQUIRE(circ.components.size() == 6);
  for (const MixtureComponent& c : circ.components) {
    CHECK(c.mean.norm() == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(c.weight == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  }
  const DistributionSpec circ1 = builtin_spec("target_2d_circle");
  for (const MixtureComponent& c : circ1.components)
    CHECK(c.mean.norm() == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(builtin_spec("nope"), ConfigError);
}

TEST_CASE("zero component std is rejected") {
  DistributionSpec spec = builtin_spec("source_1d");
  spec.components[0].stddev = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  Rng rng(1);
  CHECK_THROWS_AS(sample(spec, 10, rng), ConfigError);
}

TEST_CASE("a million draws hit the analytic mean and std") {
  Rng rng(11);
  const Matrix s = sample(builtin_spec("source_1d"), 1000000, rng);
  const double mean = s.col(0).mean();
  const double var = (s.col(0).array() - mean).square().sum() / (s.rows() - 1.0);
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 0.01);
}

TEST_CASE("sampling is deterministic under a fixed seed") {
  Rng a(99), b(99);
  const Matrix sa = sample(builtin_spec("target_2d_circle"), 1000, a);
  const Matrix sb = sample(builtin_spec("target_2d_circle"), 1000, b);
  CHECK((sa - sb).norm() == 0.0);
}

TEST_CASE("empirical moments match analytic moments within 4 standard errors") {
  for (const char* name :
       {"source_1d", "target_1d_bimodal", "source_2d_circle", "target_2d_circle"}) {
    const DistributionSpec spec = builtin_spec(name);
    Rng rng(5);
    const Index n = 1000000;
    const Matrix s = sample(spec, n, rng);
    for (int d = 0; d < spec.dim; ++d) {
      double mean_true = 0.0, m2_true = 0.0;
      for (const MixtureComponent& c : spec.components) {
        mean_true += c.weight * c.mean(d);
        m2_true += c.weight * (c.stddev * c.stddev + c.mean(d) * c.mean(d));
      }
      const double var_true = m2_true - mean_true * mean_true;
      const double mean_emp = s.col(d).mean();
      CHECK(std::abs(mean_emp - mean_true) <
            4.0 * std::sqrt(var_true / static_cast<double>(n)));

      const double var_emp = (s.col(d).array() - mean_emp).square().sum() / (n - 1.0);
      const double m4_emp = (s.col(d).array() - mean_emp).pow(4).sum() / n;
      const double se_var = std::sqrt((m4_emp - var_emp * var_emp) / n);
      CHECK(std::abs(var_emp - var_true) < 4.0 * se_var);
    }
  }
}

TEST_CASE("log_density of standard normals") {
  const DistributionSpec d1 = builtin_spec("source_1d");
  CHECK(log_density(d1, Vector::Zero(1)) ==
        doctest::Approx(-0.5 * kLog2Pi).epsilon(1e-12));  // -0.918938...

  DistributionSpec d2;
  d2.kind = DistributionSpec::Kind::kGaussian;
  d2.dim = 2;
  d2.components = {{1.0, Vector::Zero(2), 1.0}};
  CHECK(log_density(d2, Vector::Zero(2)) ==
        doctest::Approx(-kLog2Pi).epsilon(1e-12));  // -1.837877...
}

TEST_CASE("bimodal log_density at a mode equals the two-term sum") {
  const double sm = kDefaultModeStd1d;
  const DistributionSpec tgt = builtin_spec("target_1d_bimodal");
  const double expected =
      std::log(0.5 * normal_pdf(0.0, 0.0, sm) + 0.5 * normal_pdf(2.0, 0.0, sm));
  CHECK(log_density(tgt, Vector::Constant(1, -1.0)) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("densities integrate to one") {
  const DistributionSpec d1 = builtin_spec("target_1d_bimodal");
  double acc = 0.0;
  const int n = 4001;
  const double lo = -6.0, hi = 6.0, dx = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    acc += w * std::exp(log_density(d1, Vector::Constant(1, lo + i * dx))) * dx;
  }
  CHECK(acc == doctest::Approx(1.0).epsilon(1e-3));

  const DistributionSpec d2 = builtin_spec("target_2d_circle");
  double acc2 = 0.0;
  const int m = 301;
  const double lo2 = -3.0, hi2 = 3.0, dy = (hi2 - lo2) / (m - 1);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      const double wi = (i == 0 || i == m - 1) ? 0.5 : 1.0;
      const double wj = (j == 0 || j == m - 1) ? 0.5 : 1.0;
      Vector x(2);
      x << lo2 + i * dy, lo2 + j * dy;
      acc2 += wi * wj * std::exp(log_density(d2, x)) * dy * dy;
    }
  }
  CHECK(acc2 == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("coupling batch invariants hold bit-exactly") {
  Rng rng(3);
  const CouplingBatch b =
      sample_coupling(builtin_spec("source_1d"), builtin_spec("target_1d_bimodal"), 5000, rng);
  for (Index i = 0; i < b.x0.rows(); ++i) {
    CHECK(b.xt(i, 0) == interpolate(b.x0(i, 0), b.x1(i, 0), b.t(i)));
    CHECK(b.v(i, 0) == b.x1(i, 0) - b.x0(i, 0));
    CHECK(b.t(i) >= 0.0);
    CHECK(b.t(i) < 1.0);
  }
}

TEST_CASE("interpolation endpoints: t=0 gives x0, t=1 gives x1") {
  Rng rng(3);
  CouplingBatch b =
      sample_coupling(builtin_spec("source_1d"), builtin_spec("target_1d_bimodal"), 4, rng);
  for (Index i = 0; i < b.x0.rows(); ++i) {
    CHECK(interpolate(b.x0(i, 0), b.x1(i, 0), 0.0) == b.x0(i, 0));
    CHECK(interpolate(b.x0(i, 0), b.x1(i, 0), 1.0) == b.x1(i, 0));
  }
  // x0=0, x1=2, t=0.5 -> xt=1, v=2
  CHECK(interpolate(0.0, 2.0, 0.5) == 1.0);
  CHECK(2.0 - 0.0 == 2.0);
}

TEST_CASE("conditional velocities transition from bimodal to unimodal") {
  const DistributionSpec src = builtin_spec("source_1d");
  const DistributionSpec tgt = builtin_spec("target_1d_bimodal");
  Rng rng(17);

  BinQuery bin;
  bin.xt_center = Vector::Zero(1);
  bin.t_center = 0.0;
  bin.n_wanted = 2000;
  const Matrix v0 = conditional_velocity_samples(src, tgt, bin, rng);
  REQUIRE(v0.rows() >= 500);
  // At t=0 with xt=0, v = x1: two clusters near -1 and +1.
  Index n_pos = 0, n_neg = 0;
  for (Index i = 0; i < v0.rows(); ++i) {
    if (std::abs(v0(i, 0) - 1.0) < 3.0 * kDefaultModeStd1d) ++n_pos;
    if (std::abs(v0(i, 0) + 1.0) < 3.0 * kDefaultModeStd1d) ++n_neg;
  }
  CHECK(n_pos + n_neg > 0.9 * v0.rows());
  CHECK(n_pos > 0.25 * v0.rows());
  CHECK(n_neg > 0.25 * v0.rows());

  bin.xt_center = Vector::Constant(1, -1.0);
  bin.t_center = 0.95;
  const Matrix v1 = conditional_velocity_samples(src, tgt, bin, rng);
  REQUIRE(v1.rows() >= 200);
  Index pos = 0;
  for (Index i = 0; i < v1.rows(); ++i)
    if (v1(i, 0) > 0.0) ++pos;
  CHECK(static_cast<double>(pos) / v1.rows() < 0.2);  // one-sided concentration
}

TEST_CASE("empty bins raise an occupancy error carrying the kept count") {
  const DistributionSpec src = builtin_spec("source_1d");
  const DistributionSpec tgt = builtin_spec("target_1d_bimodal");
  Rng rng(4);
  BinQuery bin;
  bin.xt_center = Vector::Constant(1, 40.0);  // far outside the support
  bin.t_center = 0.5;
  bin.max_draws = 100000;
  try {
    conditional_velocity_samples(src, tgt, bin, rng);
    FAIL("expected OccupancyError");
  } catch (const OccupancyError& e) {
    CHECK(e.kept() == 0);
    CHECK(std::string(e.what()).find("insufficient bin occupancy") != std::string::npos);
  }
}

TEST_SUITE_END();
