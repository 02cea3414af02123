#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "corgi/error.hpp"
#include "corgi/tensor.hpp"

namespace corgi {

enum class Partition { User, Item };

struct NodeId {
  Partition partition = Partition::User;
  std::size_t index = 0;

  friend bool operator==(const NodeId&, const NodeId&) = default;
};

struct LabeledEdge {
  std::int32_t user = 0;
  std::int32_t item = 0;
  std::int32_t label = 0;

  friend bool operator==(const LabeledEdge&, const LabeledEdge&) = default;
};

using EdgeId = std::size_t;

/// Immutable user-item graph. Edge ids are positions in `edges()`;
/// adjacency lists hold edge ids in increasing order.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_edges() const { return edges_.size(); }
  int label_count() const { return label_count_; }

  const std::vector<LabeledEdge>& edges() const { return edges_; }
  const LabeledEdge& edge(EdgeId id) const { return edges_.at(id); }

  const std::vector<EdgeId>& user_edges(std::size_t u) const { return adj_user_.at(u); }
  const std::vector<EdgeId>& item_edges(std::size_t m) const { return adj_item_.at(m); }

  std::size_t user_degree(std::size_t u) const { return adj_user_.at(u).size(); }
  std::size_t item_degree(std::size_t m) const { return adj_item_.at(m).size(); }

  double density() const {
    return static_cast<double>(edges_.size()) / (static_cast<double>(num_users_) * static_cast<double>(num_items_));
  }

  friend BipartiteGraph build_graph(std::vector<LabeledEdge> edges, std::size_t num_users, std::size_t num_items,
                                    int label_count);

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  int label_count_ = 0;
  std::vector<LabeledEdge> edges_;
  std::vector<std::vector<EdgeId>> adj_user_;
  std::vector<std::vector<EdgeId>> adj_item_;
};

inline BipartiteGraph build_graph(std::vector<LabeledEdge> edges, std::size_t num_users, std::size_t num_items,
                                  int label_count) {
  if (label_count < 1) {
    throw Error(ErrorCode::LabelOutOfRange, "label count must be at least 1, got " + std::to_string(label_count));
  }
  BipartiteGraph g;
  g.num_users_ = num_users;
  g.num_items_ = num_items;
  g.label_count_ = label_count;
  g.adj_user_.resize(num_users);
  g.adj_item_.resize(num_items);
  for (EdgeId id = 0; id < edges.size(); ++id) {
    const auto& e = edges[id];
    if (e.user < 0 || static_cast<std::size_t>(e.user) >= num_users) {
      throw Error(ErrorCode::IndexOutOfRange, "edge " + std::to_string(id) + ": user " + std::to_string(e.user) +
                                                  " outside [0, " + std::to_string(num_users) + ")");
    }
    if (e.item < 0 || static_cast<std::size_t>(e.item) >= num_items) {
      throw Error(ErrorCode::IndexOutOfRange, "edge " + std::to_string(id) + ": item " + std::to_string(e.item) +
                                                  " outside [0, " + std::to_string(num_items) + ")");
    }
    if (e.label < 0 || e.label >= label_count) {
      throw Error(ErrorCode::LabelOutOfRange, "edge " + std::to_string(id) + ": label " + std::to_string(e.label) +
                                                  " outside [0, " + std::to_string(label_count) + ")");
    }
    g.adj_user_[e.user].push_back(id);
    g.adj_item_[e.item].push_back(id);
  }
  for (std::size_t u = 0; u < num_users; ++u) {
    auto& adj = g.adj_user_[u];
    std::vector<std::int32_t> items(adj.size());
    std::transform(adj.begin(), adj.end(), items.begin(), [&](EdgeId id) { return edges[id].item; });
    std::sort(items.begin(), items.end());
    if (auto dup = std::adjacent_find(items.begin(), items.end()); dup != items.end()) {
      throw Error(ErrorCode::DuplicateEdge, "duplicate edge (" + std::to_string(u) + "," + std::to_string(*dup) + ")");
    }
  }
  g.edges_ = std::move(edges);
  return g;
}

/// Opposite-partition endpoints of the edges incident to `n`, ordered by
/// neighbor index.
inline std::vector<std::pair<NodeId, EdgeId>> neighbors(const BipartiteGraph& g, NodeId n) {
  const bool user = n.partition == Partition::User;
  const std::size_t limit = user ? g.num_users() : g.num_items();
  if (n.index >= limit) {
    throw Error(ErrorCode::IndexOutOfRange, std::string(user ? "user " : "item ") + std::to_string(n.index) +
                                                " outside [0, " + std::to_string(limit) + ")");
  }
  const auto& adj = user ? g.user_edges(n.index) : g.item_edges(n.index);
  std::vector<std::pair<NodeId, EdgeId>> out;
  out.reserve(adj.size());
  for (EdgeId id : adj) {
    const auto& e = g.edge(id);
    if (user) {
      out.push_back({NodeId{Partition::Item, static_cast<std::size_t>(e.item)}, id});
    } else {
      out.push_back({NodeId{Partition::User, static_cast<std::size_t>(e.user)}, id});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first.index < b.first.index; });
  return out;
}

/// Per-item content matrices (one row per content vector). Matrices with
/// more than `truncation` rows are cut to their first `truncation` rows;
/// items with zero rows are simply not stored.
class ContentStore {
 public:
  ContentStore(std::size_t dim, std::size_t truncation) : dim_(dim), truncation_(truncation) {
    if (truncation_ < 1) {
      throw Error(ErrorCode::InvalidConfig, "content truncation must be at least 1");
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t truncation() const { return truncation_; }
  const std::map<std::size_t, Matrix>& vectors() const { return vectors_; }
  bool empty() const { return vectors_.empty(); }
  bool contains(std::size_t item) const { return vectors_.contains(item); }

  void set(std::size_t item, const Matrix& rows) {
    if (rows.cols() != static_cast<Eigen::Index>(dim_)) {
      throw Error(ErrorCode::DimensionMismatch, "item " + std::to_string(item) + " content has " +
                                                    std::to_string(rows.cols()) + " columns, expected " +
                                                    std::to_string(dim_));
    }
    if (rows.rows() == 0) {
      vectors_.erase(item);
      return;
    }
    const auto keep = std::min<Eigen::Index>(rows.rows(), static_cast<Eigen::Index>(truncation_));
    vectors_[item] = rows.topRows(keep);
  }

 private:
  std::size_t dim_;
  std::size_t truncation_;
  std::map<std::size_t, Matrix> vectors_;
};

/// A graph together with its item content, stacked into one matrix:
/// the rows of item m are [row_begin(m), row_end(m)) of `stacked()`.
class ContentGraph {
 public:
  const BipartiteGraph& graph() const { return graph_; }
  std::size_t dim() const { return dim_; }
  const Matrix& stacked() const { return stacked_; }
  std::int32_t row_begin(std::size_t item) const { return offsets_[item]; }
  std::int32_t row_end(std::size_t item) const { return offsets_[item + 1]; }
  std::size_t content_count(std::size_t item) const { return static_cast<std::size_t>(offsets_[item + 1] - offsets_[item]); }
  bool has_content(std::size_t item) const { return offsets_[item + 1] > offsets_[item]; }

  Matrix content(std::size_t item) const {
    return stacked_.middleRows(offsets_[item], offsets_[item + 1] - offsets_[item]);
  }

  friend ContentGraph attach_content(BipartiteGraph g, const ContentStore& cs);

 private:
  BipartiteGraph graph_;
  std::size_t dim_ = 0;
  Matrix stacked_;
  std::vector<std::int32_t> offsets_;
};

inline ContentGraph attach_content(BipartiteGraph g, const ContentStore& cs) {
  std::size_t total = 0;
  for (const auto& [item, rows] : cs.vectors()) {
    if (item >= g.num_items()) {
      throw Error(ErrorCode::UnknownItem, "content given for item " + std::to_string(item) + " but the graph has " +
                                              std::to_string(g.num_items()) + " items");
    }
    if (rows.cols() != static_cast<Eigen::Index>(cs.dim())) {
      throw Error(ErrorCode::DimensionMismatch, "item " + std::to_string(item) + " content width " +
                                                    std::to_string(rows.cols()) + " != " + std::to_string(cs.dim()));
    }
    total += static_cast<std::size_t>(rows.rows());
  }
  ContentGraph cg;
  cg.dim_ = cs.dim();
  cg.stacked_.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(cs.dim()));
  cg.offsets_.assign(g.num_items() + 1, 0);
  Eigen::Index cursor = 0;
  for (std::size_t m = 0; m < g.num_items(); ++m) {
    cg.offsets_[m] = static_cast<std::int32_t>(cursor);
    if (auto it = cs.vectors().find(m); it != cs.vectors().end()) {
      cg.stacked_.middleRows(cursor, it->second.rows()) = it->second;
      cursor += it->second.rows();
    }
  }
  cg.offsets_[g.num_items()] = static_cast<std::int32_t>(cursor);
  cg.graph_ = std::move(g);
  return cg;
}

struct DatasetSplit {
  std::vector<EdgeId> train;
  std::vector<EdgeId> val;
  std::vector<EdgeId> test;
};

/// Seeded 8:1:1 partition of the edge ids. Validation and test each get
/// round(|E| / 10) edges; each part is returned sorted.
inline DatasetSplit split_edges(const BipartiteGraph& g, std::uint64_t seed) {
  const std::size_t n = g.num_edges();
  if (n < 10) {
    throw Error(ErrorCode::TooFewEdges, "splitting needs at least 10 edges, got " + std::to_string(n));
  }
  std::vector<EdgeId> order(n);
  std::iota(order.begin(), order.end(), EdgeId{0});
  Rng rng(mix_seed(seed, 0x5917));
  for (std::size_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(order[i], order[pick(rng)]);
  }
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) / 10.0));
  const auto n_test = n_val;
  DatasetSplit s;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val),
                order.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace corgi
