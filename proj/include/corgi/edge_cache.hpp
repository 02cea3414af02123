#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "corgi/error.hpp"
#include "corgi/tensor.hpp"

namespace corgi {

/// Stored content-attention edge vectors, one per (edge, direction).
/// Direction 0 is the user-receiving side of the edge, 1 the item side.
/// Entries start at zero with stamp -1 ("never written").
class EdgeCACache {
 public:
  EdgeCACache(std::size_t num_edges, int dim)
      : num_edges_(num_edges),
        dim_(dim),
        values_(Matrix::Zero(static_cast<Eigen::Index>(2 * num_edges), dim)),
        stamps_(2 * num_edges, -1) {}

  std::size_t num_edges() const { return num_edges_; }
  int dim() const { return dim_; }
  const Matrix& values() const { return values_; }
  const std::vector<std::int64_t>& stamps() const { return stamps_; }

  static std::size_t slot(std::size_t edge, int dir) { return 2 * edge + static_cast<std::size_t>(dir); }

  auto entry(std::size_t edge, int dir) const { return values_.row(static_cast<Eigen::Index>(slot(edge, dir))); }
  std::int64_t stamp(std::size_t edge, int dir) const { return stamps_[slot(edge, dir)]; }

  template <typename Row>
  void write(std::size_t edge, int dir, const Row& value, std::int64_t epoch) {
    values_.row(static_cast<Eigen::Index>(slot(edge, dir))) = value;
    stamps_[slot(edge, dir)] = epoch;
  }

  void require_shape(std::size_t num_edges, int dim) const {
    if (num_edges != num_edges_ || dim != dim_) {
      throw Error(ErrorCode::CacheShapeMismatch, "cache holds " + std::to_string(num_edges_) + " edges x " +
                                                     std::to_string(dim_) + " but the model needs " +
                                                     std::to_string(num_edges) + " x " + std::to_string(dim));
    }
  }

  /// Checkpoint records `cache/<edge>/<dir>` for every written entry.
  std::vector<std::pair<std::string, Matrix>> records() const {
    std::vector<std::pair<std::string, Matrix>> out;
    for (std::size_t e = 0; e < num_edges_; ++e) {
      for (int d = 0; d < 2; ++d) {
        if (stamp(e, d) >= 0) {
          out.emplace_back("cache/" + std::to_string(e) + "/" + std::to_string(d), Matrix(entry(e, d)));
        }
      }
    }
    return out;
  }

  /// Restores entries from checkpoint records; other records are skipped.
  /// Restored entries carry stamp 0.
  void load_records(const std::vector<std::pair<std::string, Matrix>>& records) {
    for (const auto& [name, m] : records) {
      if (!name.starts_with("cache/")) {
        continue;
      }
      const auto slash = name.find('/', 6);
      if (slash == std::string::npos) {
        throw Error(ErrorCode::ParseError, "bad cache record name '" + name + "'");
      }
      std::size_t edge = 0;
      int dir = 0;
      try {
        edge = std::stoull(name.substr(6, slash - 6));
        dir = std::stoi(name.substr(slash + 1));
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, "bad cache record name '" + name + "'");
      }
      if (edge >= num_edges_ || (dir != 0 && dir != 1) || m.rows() != 1 || m.cols() != dim_) {
        throw Error(ErrorCode::CacheShapeMismatch, "cache record '" + name + "' does not fit a cache of " +
                                                       std::to_string(num_edges_) + " edges x " + std::to_string(dim_));
      }
      write(edge, dir, m.row(0), 0);
    }
  }

 private:
  std::size_t num_edges_;
  int dim_;
  Matrix values_;
  std::vector<std::int64_t> stamps_;
};

}  // namespace corgi
