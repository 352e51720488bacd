#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "vrfm/training.hpp"

using namespace vrfm;

namespace {

VelocityModelConfig tiny_model(int data_dim, int latent_dim) {
  VelocityModelConfig cfg;
  cfg.data_dim = data_dim;
  cfg.hidden_dim = 12;
  cfg.embed_dim = 6;
  cfg.latent_dim = latent_dim;
  cfg.latent_hidden = 10;
  cfg.decoder_layers = 3;
  return cfg;
}

PosteriorConfig tiny_posterior(int data_dim, int latent_dim) {
  PosteriorConfig cfg;
  cfg.data_dim = data_dim;
  cfg.hidden_dim = 12;
  cfg.embed_dim = 6;
  cfg.latent_dim = latent_dim;
  return cfg;
}

CouplingBatch small_batch(int n, int dim, unsigned seed) {
  Rng rng(seed);
  const DistributionSpec src =
      builtin_spec(dim == 2 ? "source_2d_circle" : "source_1d");
  const DistributionSpec tgt =
      builtin_spec(dim == 2 ? "target_2d_circle" : "target_1d_bimodal");
  return sample_coupling(src, tgt, n, rng);
}

}  // namespace

TEST_SUITE_BEGIN("training");

TEST_CASE("rfm loss vanishes when the model already matches the targets") {
  Rng rng(1);
  const VelocityModel model = VelocityModel::init(tiny_model(1, 0), rng);
  CouplingBatch batch = small_batch(32, 1, 2);
  batch.v = model.eval(batch.xt, batch.t);
  CHECK(rfm_loss(model, batch) == 0.0);
}

TEST_CASE("rfm loss of an all-zero model on v=2 is 4") {
  Rng rng(1);
  VelocityModel model = VelocityModel::init(tiny_model(1, 0), rng);
  for (Parameter& p : model.params()) p.values.setZero();
  CouplingBatch batch = small_batch(1, 1, 3);
  batch.x0.setZero();
  batch.x1.setConstant(2.0);
  batch.t.setConstant(0.5);
  batch.xt = 0.5 * batch.x0 + 0.5 * batch.x1;
  batch.v = batch.x1 - batch.x0;
  CHECK(rfm_loss(model, batch) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("rfm loss is invariant under batch row permutation") {
  Rng rng(5);
  const VelocityModel model = VelocityModel::init(tiny_model(2, 0), rng);
  CouplingBatch batch = small_batch(64, 2, 6);
  const double base = rfm_loss(model, batch);

  CouplingBatch rev;
  rev.x0 = batch.x0.colwise().reverse();
  rev.x1 = batch.x1.colwise().reverse();
  rev.t = batch.t.reverse();
  rev.xt = batch.xt.colwise().reverse();
  rev.v = batch.v.colwise().reverse();
  CHECK(rfm_loss(model, rev) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("rfm loss rejects latent models") {
  Rng rng(1);
  const VelocityModel model = VelocityModel::init(tiny_model(1, 4), rng);
  CHECK_THROWS_AS(rfm_loss(model, small_batch(4, 1, 7)), Error);
}

TEST_CASE("posterior forced to the prior makes the KL vanish") {
  Rng rng(10);
  const VelocityModel model = VelocityModel::init(tiny_model(1, 2), rng);
  PosteriorModel post = PosteriorModel::init(tiny_posterior(1, 2), rng);
  for (Parameter& p : post.params())
    if (p.name == "head.mu.weight" || p.name == "head.mu.bias" ||
        p.name == "head.logsigma.weight" || p.name == "head.logsigma.bias")
      p.values.setZero();
  Rng lr(11);
  const LossBreakdown l = vrfm_loss(model, post, small_batch(16, 1, 12), 1.0, lr);
  CHECK(l.kl == 0.0);
  CHECK(l.total == l.recon);
}

TEST_CASE("beta = 0 reduces the total to the reconstruction") {
  Rng rng(13);
  const VelocityModel model = VelocityModel::init(tiny_model(1, 2), rng);
  const PosteriorModel post = PosteriorModel::init(tiny_posterior(1, 2), rng);
  Rng lr(14);
  const LossBreakdown l = vrfm_loss(model, post, small_batch(16, 1, 15), 0.0, lr);
  CHECK(l.total == l.recon);
  CHECK(l.kl > 0.0);
}

TEST_CASE("vrfm loss rejects mismatched latent dims") {
  Rng rng(16);
  const VelocityModel model = VelocityModel::init(tiny_model(1, 2), rng);
  const PosteriorModel post = PosteriorModel::init(tiny_posterior(1, 3), rng);
  Rng lr(17);
  CHECK_THROWS_AS(vrfm_loss(model, post, small_batch(4, 1, 18), 1.0, lr), ShapeError);
}

TEST_CASE("rfm gradients match finite differences on a batch of 4") {
  Rng rng(20);
  const VelocityModel model = VelocityModel::init(tiny_model(1, 0), rng);
  const auto report = testutil::rfm_grad_report(model, small_batch(4, 1, 21), 1e-5);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("vrfm gradients (theta and phi jointly) match finite differences") {
  Rng rng(22);
  const VelocityModel model = VelocityModel::init(tiny_model(1, 2), rng);
  const PosteriorModel post = PosteriorModel::init(tiny_posterior(1, 2), rng);
  Rng er(23);
  const auto report =
      testutil::vrfm_grad_report(model, post, small_batch(4, 1, 24), 1.0, 1e-5, er);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("same seed twice gives byte-identical checkpoints") {
  const DistributionSpec src = builtin_spec("source_1d");
  const DistributionSpec tgt = builtin_spec("target_1d_bimodal");
  TrainConfig tc;
  tc.iterations = 25;
  tc.batch_size = 16;
  tc.seed = 4242;
  tc.log_every = 10;
  tc.objective = Objective::kVrfm;

  auto run_and_serialize = [&] {
    const TrainResult r = train(src, tgt, tiny_model(1, 2), tiny_posterior(1, 2), tc);
    const std::string path = "/tmp/vrfm_det_test.ckpt";
    save_checkpoint(r.checkpoint, path);
    std::ifstream is(path, std::ios::binary);
    std::ostringstream buf;
    buf << is.rdbuf();
    return buf.str();
  };
  const std::string a = run_and_serialize();
  const std::string b = run_and_serialize();
  CHECK(a == b);
  CHECK(a.size() > 0);
}

TEST_CASE("training reduces the smoothed loss") {
  const DistributionSpec src = builtin_spec("source_1d");
  const DistributionSpec tgt = builtin_spec("target_1d_bimodal");
  TrainConfig tc;
  tc.iterations = 400;
  tc.batch_size = 128;
  tc.seed = 7;
  tc.log_every = 1;
  tc.objective = Objective::kRfm;
  const TrainResult r = train(src, tgt, tiny_model(1, 0), std::nullopt, tc);
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 50; ++i) early += r.history[i].total / 50.0;
  for (int i = 0; i < 50; ++i) late += r.history[r.history.size() - 1 - i].total / 50.0;
  CHECK(late < early);
}

TEST_CASE("vrfm requires a posterior config and rfm a latent-free model") {
  const DistributionSpec src = builtin_spec("source_1d");
  const DistributionSpec tgt = builtin_spec("target_1d_bimodal");
  TrainConfig tc;
  tc.iterations = 1;
  tc.batch_size = 4;
  tc.objective = Objective::kVrfm;
  CHECK_THROWS_AS(train(src, tgt, tiny_model(1, 2), std::nullopt, tc), ConfigError);
  tc.objective = Objective::kRfm;
  CHECK_THROWS_AS(train(src, tgt, tiny_model(1, 2), std::nullopt, tc), ConfigError);
}

TEST_CASE("gaussian-to-gaussian rfm converges to the conditional variance floor") {
  // Independent N(0,1) coupling. The floor E||v||^2 - E||E[v|xt,t]||^2 comes
  // from a binned regression oracle on 1e6 couplings, not from the model.
  const DistributionSpec src = builtin_spec("source_1d");
  DistributionSpec tgt = builtin_spec("source_1d");  // N(0,1) target too
  Rng orng(100);
  const CouplingBatch pool = sample_coupling(src, tgt, 1000000, orng);

  const int nx = 60, nt = 25;
  const double x_lo = -3.0, x_hi = 3.0;
  Matrix sum = Matrix::Zero(nx, nt), cnt = Matrix::Zero(nx, nt);
  double total_sq = 0.0;
  for (Index i = 0; i < pool.x0.rows(); ++i) {
    total_sq += pool.v(i, 0) * pool.v(i, 0) / static_cast<double>(pool.x0.rows());
    const int bx = static_cast<int>((pool.xt(i, 0) - x_lo) / (x_hi - x_lo) * nx);
    const int bt = static_cast<int>(pool.t(i) * nt);
    if (bx < 0 || bx >= nx || bt < 0 || bt >= nt) continue;
    sum(bx, bt) += pool.v(i, 0);
    cnt(bx, bt) += 1.0;
  }
  double explained = 0.0;
  for (int a = 0; a < nx; ++a)
    for (int b = 0; b < nt; ++b)
      if (cnt(a, b) >= 50.0) {
        const double m = sum(a, b) / cnt(a, b);
        explained += m * m * cnt(a, b);
      }
  const double floor_est = total_sq - explained / static_cast<double>(pool.x0.rows());

  TrainConfig tc;
  tc.iterations = 3000;
  tc.batch_size = 512;
  tc.seed = 3;
  tc.log_every = 10;
  tc.objective = Objective::kRfm;
  VelocityModelConfig mc;
  mc.data_dim = 1;
  mc.hidden_dim = 32;
  mc.embed_dim = 16;
  mc.latent_dim = 0;
  mc.decoder_layers = 3;
  const TrainResult r = train(src, tgt, mc, std::nullopt, tc);
  CHECK(std::abs(r.final_losses.recon - floor_est) / floor_est < 0.05);
}

TEST_SUITE_END();
