#include "vrfm/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vrfm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

int pick_component(const DistributionSpec& spec, Rng& rng) {
  if (spec.components.size() == 1) return 0;
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < spec.components.size(); ++i) {
    acc += spec.components[i].weight;
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(spec.components.size()) - 1;
}

}  // namespace

void DistributionSpec::validate() const {
  if (dim < 1) throw ConfigError("distribution dim must be >= 1");
  if (components.empty()) throw ConfigError("distribution needs at least one component");
  if (kind == Kind::kGaussian && components.size() != 1)
    throw ConfigError("gaussian spec must have exactly one component");
  double wsum = 0.0;
  for (const MixtureComponent& c : components) {
    if (!(c.weight > 0.0)) throw ConfigError("component weights must be positive");
    if (!(c.stddev > 0.0)) throw ConfigError("component std must be > 0");
    if (c.mean.size() != dim)
      throw ConfigError("component mean length " + std::to_string(c.mean.size()) +
                        " does not match dim " + std::to_string(dim));
    wsum += c.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-12)
    throw ConfigError("component weights must sum to 1 (got " + std::to_string(wsum) + ")");
}

DistributionSpec builtin_spec(const std::string& name, std::optional<double> mode_std) {
  DistributionSpec spec;
  if (name == "source_1d") {
    spec.kind = DistributionSpec::Kind::kGaussian;
    spec.dim = 1;
    spec.components = {{1.0, Vector::Zero(1), 1.0}};
  } else if (name == "target_1d_bimodal") {
    spec.kind = DistributionSpec::Kind::kMixture;
    spec.dim = 1;
    const double s = mode_std.value_or(kDefaultModeStd1d);
    Vector lo(1), hi(1);
    lo << -1.0;
    hi << 1.0;
    spec.components = {{0.5, lo, s}, {0.5, hi, s}};
  } else if (name == "source_2d_circle" || name == "target_2d_circle") {
    spec.kind = DistributionSpec::Kind::kMixture;
    spec.dim = 2;
    const double radius = (name == "source_2d_circle") ? 1.0 / 3.0 : 1.0;
    const double s = mode_std.value_or(kDefaultModeStd2d);
    for (int k = 0; k < 6; ++k) {
      const double angle = k * (2.0 * 3.14159265358979323846 / 6.0);
      Vector mean(2);
      mean << radius * std::cos(angle), radius * std::sin(angle);
      spec.components.push_back({1.0 / 6.0, mean, s});
    }
  } else {
    throw ConfigError("unknown builtin distribution: " + name);
  }
  spec.validate();
  return spec;
}

Matrix sample(const DistributionSpec& spec, Index n, Rng& rng) {
  spec.validate();
  if (n < 1) throw Error("sample: n must be >= 1");
  Matrix out(n, spec.dim);
  for (Index i = 0; i < n; ++i) {
    const MixtureComponent& c = spec.components[pick_component(spec, rng)];
    for (int j = 0; j < spec.dim; ++j) out(i, j) = c.mean(j) + c.stddev * rng.normal();
  }
  return out;
}

double log_density(const DistributionSpec& spec, const Vector& x) {
  if (x.size() != spec.dim)
    throw ShapeError("log_density: point has length " + std::to_string(x.size()) +
                     ", spec dim is " + std::to_string(spec.dim));
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(spec.components.size());
  for (std::size_t i = 0; i < spec.components.size(); ++i) {
    const MixtureComponent& c = spec.components[i];
    const double d2 = (x - c.mean).squaredNorm();
    terms[i] = std::log(c.weight) - 0.5 * spec.dim * kLog2Pi -
               spec.dim * std::log(c.stddev) - 0.5 * d2 / (c.stddev * c.stddev);
    best = std::max(best, terms[i]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

CouplingBatch sample_coupling(const DistributionSpec& source, const DistributionSpec& target,
                              Index n, Rng& rng) {
  if (source.dim != target.dim)
    throw ShapeError("sample_coupling: source dim " + std::to_string(source.dim) +
                     " != target dim " + std::to_string(target.dim));
  CouplingBatch b;
  b.x0 = sample(source, n, rng);
  b.x1 = sample(target, n, rng);
  b.t.resize(n);
  for (Index i = 0; i < n; ++i) b.t(i) = rng.uniform();
  b.xt.resize(n, source.dim);
  for (Index i = 0; i < n; ++i)
    for (int j = 0; j < source.dim; ++j)
      b.xt(i, j) = interpolate(b.x0(i, j), b.x1(i, j), b.t(i));
  b.v = b.x1 - b.x0;
  return b;
}

Matrix conditional_velocity_samples(const DistributionSpec& source,
                                    const DistributionSpec& target, const BinQuery& bin,
                                    Rng& rng) {
  if (!(bin.t_center >= 0.0 && bin.t_center < 1.0))
    throw Error("conditional_velocity_samples: t_center must be in [0, 1)");
  if (!(bin.x_halfwidth > 0.0 && bin.t_halfwidth > 0.0))
    throw Error("conditional_velocity_samples: halfwidths must be positive");
  if (bin.xt_center.size() != source.dim)
    throw ShapeError("conditional_velocity_samples: xt_center has wrong length");

  Matrix kept(bin.n_wanted, source.dim);
  Index n_kept = 0;
  long drawn = 0;
  const Index chunk = 16384;
  while (n_kept < bin.n_wanted && drawn < bin.max_draws) {
    const Index want = static_cast<Index>(std::min<long>(chunk, bin.max_draws - drawn));
    const CouplingBatch batch = sample_coupling(source, target, want, rng);
    drawn += want;
    for (Index i = 0; i < want && n_kept < bin.n_wanted; ++i) {
      if (std::abs(batch.t(i) - bin.t_center) > bin.t_halfwidth) continue;
      bool inside = true;
      for (int j = 0; j < source.dim; ++j) {
        if (std::abs(batch.xt(i, j) - bin.xt_center(j)) > bin.x_halfwidth) {
          inside = false;
          break;
        }
      }
      if (inside) kept.row(n_kept++) = batch.v.row(i);
    }
  }
  if (n_kept < bin.min_kept)
    throw OccupancyError("insufficient bin occupancy: kept " + std::to_string(n_kept) +
                             " of " + std::to_string(bin.min_kept) + " required after " +
                             std::to_string(drawn) + " draws",
                         n_kept);
  return kept.topRows(n_kept);
}

}  // namespace vrfm
