#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vrfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Error taxonomy. Everything user-facing derives from Error so the CLI can
// map config problems to exit code 2 and runtime/numeric problems to 3.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor/op shape violations (bad matmul dims, broken MLP chains, ...).
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

/// Config parsing/validation problems; carries the offending key path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::string key_path = {})
      : Error(key_path.empty() ? what : what + " (at '" + key_path + "')"),
        key_path_(std::move(key_path)) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

/// Non-finite values, exhausted solver budgets, diverged training.
class NumericsError : public Error {
 public:
  explicit NumericsError(const std::string& what) : Error(what) {}
};

/// Rejection sampling could not fill a bin; carries how many were kept.
class OccupancyError : public Error {
 public:
  OccupancyError(const std::string& what, long kept) : Error(what), kept_(kept) {}
  long kept() const { return kept_; }

 private:
  long kept_ = 0;
};

/// File I/O and serialization-format problems.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

// ---------------------------------------------------------------------------
// Rng: mt19937_64 with explicit Box-Muller normals. The generator sequence
// depends only on the seed, so every sampling routine that threads an Rng is
// reproducible bit-for-bit.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller, one cached spare per pair.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Rademacher +-1.
  double rademacher() { return (next_u64() & 1u) ? 1.0 : -1.0; }

  Matrix normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  Matrix uniform_matrix(Index rows, Index cols, double lo, double hi) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = lo + (hi - lo) * uniform();
    return m;
  }

  /// Derive an independent child stream (e.g. one per training cell).
  Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

  // splitmix64 step; the full generator state is this single counter.
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace vrfm
