#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "corgi/error.hpp"

namespace corgi {

/// Dense row-major 64-bit matrix. Vectors are stored as n x 1 columns.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Seeded generator used everywhere randomness is needed.
using Rng = std::mt19937_64;

/// Derives an independent stream from a base seed and a salt so that
/// separate consumers (init, dropout, splits) never share draws.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix relu(const Matrix& x) { return (x.array() > 0.0).select(x, 0.0); }

inline Matrix leaky_relu(const Matrix& x, double slope) {
  return x.unaryExpr([slope](double v) { return leaky_relu(v, slope); });
}

inline Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

/// Numerically stable softmax (max-subtracted).
inline std::vector<double> softmax(std::span<const double> scores) {
  if (scores.empty()) {
    throw Error(ErrorCode::EmptyInput, "softmax of an empty score vector");
  }
  const double top = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double total = 0.0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    out[k] = std::exp(scores[k] - top);
    total += out[k];
  }
  for (double& v : out) {
    v /= total;
  }
  return out;
}

inline Vector softmax(const Vector& scores) {
  auto probs = softmax(std::span<const double>(scores.data(), scores.size()));
  return Eigen::Map<const Vector>(probs.data(), static_cast<Eigen::Index>(probs.size()));
}

/// Uniform Glorot initialisation, bound sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = dist(rng);
  }
  return m;
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = dist(rng);
  }
  return m;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Bitwise equality, distinguishing e.g. 0.0 and -0.0.
inline bool bit_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    return false;
  }
  return std::equal(a.data(), a.data() + a.size(), b.data(), [](double x, double y) {
    return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
  });
}

}  // namespace corgi
