#include "vrfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vrfm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double logsumexp_row(const RowVector& row) {
  const double m = row.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((row.array() - m).exp().sum());
}

}  // namespace

double true_log_likelihood(const Matrix& generated, const DistributionSpec& target) {
  if (generated.rows() < 1) throw Error("true_log_likelihood: need at least one sample");
  double acc = 0.0;
  for (Index i = 0; i < generated.rows(); ++i)
    acc += log_density(target, generated.row(i).transpose());
  return acc / static_cast<double>(generated.rows());
}

double parzen_log_likelihood(const Matrix& generated, const Matrix& test, double bandwidth) {
  if (generated.rows() < 1 || test.rows() < 1)
    throw Error("parzen_log_likelihood: empty sample set");
  if (generated.cols() != test.cols())
    throw ShapeError("parzen_log_likelihood: dimension mismatch");
  if (!(bandwidth > 0.0)) throw Error("parzen_log_likelihood: bandwidth must be positive");

  const Index n = generated.rows(), m = test.rows();
  const double d = static_cast<double>(generated.cols());
  const double log_norm = -std::log(static_cast<double>(n)) -
                          0.5 * d * kLog2Pi - d * std::log(bandwidth);
  const double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth);

  const Vector g2 = generated.rowwise().squaredNorm();
  double acc = 0.0;
  const Index chunk = 512;
  for (Index at = 0; at < m; at += chunk) {
    const Index rows = std::min(chunk, m - at);
    const Matrix tc = test.middleRows(at, rows);
    const Vector t2 = tc.rowwise().squaredNorm();
    Matrix d2 = (-2.0 * tc * generated.transpose());
    d2.colwise() += t2;
    d2.rowwise() += g2.transpose();
    for (Index i = 0; i < rows; ++i)
      acc += logsumexp_row((-d2.row(i).cwiseMax(0.0) * inv2h2)) + log_norm;
  }
  return acc / static_cast<double>(m);
}

double select_parzen_bandwidth(const Matrix& generated, Rng& rng, int grid_points,
                               double h_min, double h_max) {
  const Index n = generated.rows();
  if (n < 10) throw Error("select_parzen_bandwidth: need at least 10 samples");
  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.uniform() * static_cast<double>(i + 1));
    std::swap(order[i], order[std::min(j, i)]);
  }
  const Index n_val = std::max<Index>(1, n / 10);
  Matrix val(n_val, generated.cols()), fit(n - n_val, generated.cols());
  for (Index i = 0; i < n_val; ++i) val.row(i) = generated.row(order[i]);
  for (Index i = n_val; i < n; ++i) fit.row(i - n_val) = generated.row(order[i]);

  double best_h = h_min, best_ll = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid_points; ++k) {
    const double f = grid_points == 1 ? 0.0
                                      : static_cast<double>(k) / (grid_points - 1);
    const double h = std::exp(std::log(h_min) + f * (std::log(h_max) - std::log(h_min)));
    const double ll = parzen_log_likelihood(fit, val, h);
    if (ll > best_ll) {
      best_ll = ll;
      best_h = h;
    }
  }
  return best_h;
}

double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.size() != b.size())
    throw Error("wasserstein_1d: sample counts differ (" + std::to_string(a.size()) +
                " vs " + std::to_string(b.size()) + ")");
  if (a.empty()) throw Error("wasserstein_1d: empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

double sliced_wasserstein(const Matrix& a, const Matrix& b, int n_projections, Rng& rng) {
  if (a.rows() != b.rows()) throw Error("sliced_wasserstein: sample counts differ");
  if (a.cols() != 2 || b.cols() != 2)
    throw ShapeError("sliced_wasserstein: expects n x 2 samples");
  if (n_projections < 1) throw Error("sliced_wasserstein: n_projections must be >= 1");

  std::vector<double> pa(a.rows()), pb(b.rows());
  double acc = 0.0;
  for (int p = 0; p < n_projections; ++p) {
    const double angle = 2.0 * 3.14159265358979323846 * rng.uniform();
    const double ux = std::cos(angle), uy = std::sin(angle);
    for (Index i = 0; i < a.rows(); ++i) pa[i] = ux * a(i, 0) + uy * a(i, 1);
    for (Index i = 0; i < b.rows(); ++i) pb[i] = ux * b(i, 0) + uy * b(i, 1);
    acc += wasserstein_1d(pa, pb);
  }
  return acc / n_projections;
}

double exact_wasserstein_2d(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error("exact_wasserstein_2d: sample counts differ");
  const Index n = a.rows();
  if (n > 2000) throw Error("exact_wasserstein_2d: n must be <= 2000 (slow oracle)");

  Matrix cost(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) cost(i, j) = (a.row(i) - b.row(j)).norm();

  // Jonker-Volgenant style shortest augmenting path assignment.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Index> p(n + 1, 0), way(n + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (Index j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
  return total / static_cast<double>(n);
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error("ks_statistic: empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    // Evaluate both empirical CDFs just after the next distinct data value.
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

double ks_threshold(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  return c * std::sqrt(static_cast<double>(n + m) /
                       (static_cast<double>(n) * static_cast<double>(m)));
}

// --------------------------- ambiguity machinery ----------------------------

namespace {

struct Grid {
  std::vector<double> xs;
  std::vector<double> ts;
  int data_dim = 1;
  Index n_rows() const {
    Index r = static_cast<Index>(xs.size());
    if (data_dim == 2) r *= static_cast<Index>(xs.size());
    return r;
  }
  /// Row index for a data point, or -1 when outside the grid.
  Index row_of(const double* x, double x_min, double x_step) const {
    Index row = 0;
    for (int dd = data_dim - 1; dd >= 0; --dd) {
      const double rel = (x[dd] - (x_min - 0.5 * x_step)) / x_step;
      if (rel < 0.0) return -1;
      const auto idx = static_cast<Index>(rel);
      if (idx >= static_cast<Index>(xs.size())) return -1;
      row = row * static_cast<Index>(xs.size()) + idx;
    }
    return row;
  }
  Vector center_of_row(Index row) const {
    Vector x(data_dim);
    for (int dd = 0; dd < data_dim; ++dd) {
      x(dd) = xs[row % xs.size()];
      row /= static_cast<Index>(xs.size());
    }
    return x;
  }
};

Grid make_grid(const AmbiguityConfig& cfg, int data_dim) {
  Grid g;
  g.data_dim = data_dim;
  const int n_x = static_cast<int>(std::round((cfg.x_max - cfg.x_min) / cfg.x_step)) + 1;
  for (int k = 0; k < n_x; ++k) g.xs.push_back(cfg.x_min + k * cfg.x_step);
  for (int k = 0; k < cfg.n_t; ++k) g.ts.push_back(cfg.t_min + k * cfg.t_step);
  return g;
}

std::vector<ProbePoint> default_probes() {
  auto pt = [](double x, double t) {
    ProbePoint p;
    p.x = Vector::Constant(1, x);
    p.t = t;
    return p;
  };
  return {pt(0.0, 0.0), pt(0.0, 0.5), pt(0.0, 0.75), pt(-1.0, 0.95)};
}

AmbiguityReport ground_truth_map(const GroundTruthSource& src, const AmbiguityConfig& cfg,
                                 Rng& rng) {
  const int d = src.source->dim;
  const Grid grid = make_grid(cfg, d);
  const Index rows = grid.n_rows(), cols = static_cast<Index>(grid.ts.size());

  Matrix count = Matrix::Zero(rows, cols);
  std::vector<Matrix> sum(static_cast<std::size_t>(d), Matrix::Zero(rows, cols));
  std::vector<Matrix> sum_sq(static_cast<std::size_t>(d), Matrix::Zero(rows, cols));

  // One shared coupling pool; every draw lands in at most one bin. This is
  // the batch form of per-bin rejection sampling with a common budget.
  const Index chunk = 1 << 18;
  long remaining = cfg.gt_pool_draws;
  while (remaining > 0) {
    const Index n = static_cast<Index>(std::min<long>(chunk, remaining));
    remaining -= n;
    const CouplingBatch batch = sample_coupling(*src.source, *src.target, n, rng);
    for (Index i = 0; i < n; ++i) {
      const double trel = (batch.t(i) - (cfg.t_min - 0.5 * cfg.t_step)) / cfg.t_step;
      if (trel < 0.0) continue;
      const auto tcol = static_cast<Index>(trel);
      if (tcol >= cols) continue;
      const Index row = grid.row_of(batch.xt.row(i).data(), cfg.x_min, cfg.x_step);
      if (row < 0) continue;
      count(row, tcol) += 1.0;
      for (int dd = 0; dd < d; ++dd) {
        sum[dd](row, tcol) += batch.v(i, dd);
        sum_sq[dd](row, tcol) += batch.v(i, dd) * batch.v(i, dd);
      }
    }
  }

  AmbiguityReport report;
  report.xs = grid.xs;
  report.ts = grid.ts;
  report.data_dim = d;
  report.source_tag = "ground_truth";
  report.count = count;
  report.mask = Matrix::Zero(rows, cols);
  report.stddev = Matrix::Constant(rows, cols, kNaN);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const double k = count(r, c);
      if (k < static_cast<double>(cfg.min_occupancy)) continue;
      double var = 0.0;
      for (int dd = 0; dd < d; ++dd) {
        const double mean = sum[dd](r, c) / k;
        var += (sum_sq[dd](r, c) - k * mean * mean) / (k - 1.0);
      }
      report.mask(r, c) = 1.0;
      report.stddev(r, c) = std::sqrt(std::max(var, 0.0));
    }
  }

  for (const ProbePoint& probe : cfg.probes) {
    ProbeHistogram hist;
    hist.at = probe;
    BinQuery bin;
    bin.xt_center = probe.x;
    bin.t_center = probe.t;
    bin.x_halfwidth = 0.5 * cfg.x_step;
    bin.t_halfwidth = 0.5 * cfg.t_step;
    bin.n_wanted = cfg.n_per_bin;
    bin.min_kept = cfg.min_occupancy;
    bin.max_draws = cfg.probe_max_draws;
    try {
      hist.velocities = conditional_velocity_samples(*src.source, *src.target, bin, rng);
    } catch (const OccupancyError&) {
      hist.valid = false;
    }
    report.probes.push_back(std::move(hist));
  }
  return report;
}

AmbiguityReport model_map(const ModelSource& src, const AmbiguityConfig& cfg, Rng& rng) {
  const VelocityModel& model = *src.model;
  const int d = model.config().data_dim;
  const bool latent = model.config().latent_dim > 0;
  const Grid grid = make_grid(cfg, d);
  const Index rows = grid.n_rows(), cols = static_cast<Index>(grid.ts.size());
  const Index draws = latent ? cfg.n_per_bin : 1;

  AmbiguityReport report;
  report.xs = grid.xs;
  report.ts = grid.ts;
  report.data_dim = d;
  report.source_tag = latent ? "model_vrfm" : "model_rfm";
  report.count = Matrix::Constant(rows, cols, static_cast<double>(draws));
  report.mask = Matrix::Ones(rows, cols);
  report.stddev = Matrix::Zero(rows, cols);

  for (Index r = 0; r < rows; ++r) {
    const Vector center = grid.center_of_row(r);
    const Matrix xt = center.transpose().replicate(draws, 1);
    for (Index c = 0; c < cols; ++c) {
      const Matrix t = Matrix::Constant(draws, 1, grid.ts[static_cast<std::size_t>(c)]);
      Matrix v;
      if (latent) {
        const Matrix z = rng.normal_matrix(draws, model.config().latent_dim);
        v = model.eval(xt, t, &z);
      } else {
        v = model.eval(xt, t);
        report.stddev(r, c) = 0.0;  // single deterministic value
        continue;
      }
      double var = 0.0;
      for (int dd = 0; dd < d; ++dd) {
        const double mean = v.col(dd).mean();
        var += (v.col(dd).array() - mean).square().sum() / static_cast<double>(draws - 1);
      }
      report.stddev(r, c) = std::sqrt(std::max(var, 0.0));
    }
  }

  for (const ProbePoint& probe : cfg.probes) {
    ProbeHistogram hist;
    hist.at = probe;
    const Matrix xt = probe.x.transpose().replicate(draws, 1);
    const Matrix t = Matrix::Constant(draws, 1, probe.t);
    if (latent) {
      const Matrix z = rng.normal_matrix(draws, model.config().latent_dim);
      hist.velocities = model.eval(xt, t, &z);
    } else {
      hist.velocities = model.eval(xt, t);
    }
    report.probes.push_back(std::move(hist));
  }
  return report;
}

}  // namespace

AmbiguityReport ambiguity_map(const VelocitySource& source, const AmbiguityConfig& cfg_in,
                              Rng& rng) {
  AmbiguityConfig cfg = cfg_in;
  if (cfg.probes.empty()) cfg.probes = default_probes();
  if (!(cfg.x_step > 0.0 && cfg.t_step > 0.0))
    throw ConfigError("ambiguity grid steps must be positive");
  if (std::holds_alternative<GroundTruthSource>(source)) {
    const auto& gt = std::get<GroundTruthSource>(source);
    if (gt.source->dim > 1) {
      // Probe points default to 1D locations; drop them for 2D maps unless
      // the caller supplied dimension-matching probes.
      std::vector<ProbePoint> keep;
      for (const ProbePoint& p : cfg.probes)
        if (p.x.size() == gt.source->dim) keep.push_back(p);
      cfg.probes = keep;
    }
    return ground_truth_map(gt, cfg, rng);
  }
  const auto& ms = std::get<ModelSource>(source);
  if (ms.model->config().data_dim > 1) {
    std::vector<ProbePoint> keep;
    for (const ProbePoint& p : cfg.probes)
      if (p.x.size() == ms.model->config().data_dim) keep.push_back(p);
    cfg.probes = keep;
  }
  return model_map(ms, cfg, rng);
}

double ambiguity_pearson(const AmbiguityReport& a, const AmbiguityReport& b) {
  if (a.stddev.rows() != b.stddev.rows() || a.stddev.cols() != b.stddev.cols())
    throw ShapeError("ambiguity_pearson: grids differ");
  std::vector<double> va, vb;
  for (Index r = 0; r < a.stddev.rows(); ++r) {
    for (Index c = 0; c < a.stddev.cols(); ++c) {
      if (a.mask(r, c) > 0.5 && b.mask(r, c) > 0.5) {
        va.push_back(a.stddev(r, c));
        vb.push_back(b.stddev(r, c));
      }
    }
  }
  if (va.size() < 2) throw Error("ambiguity_pearson: not enough unmasked bins");
  const double n = static_cast<double>(va.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    ma += va[i] / n;
    mb += vb[i] / n;
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    sab += (va[i] - ma) * (vb[i] - mb);
    saa += (va[i] - ma) * (va[i] - ma);
    sbb += (vb[i] - mb) * (vb[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace vrfm
