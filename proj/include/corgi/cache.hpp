#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <unordered_set>
#include <vector>

#include "corgi/edge_cache.hpp"
#include "corgi/graph.hpp"
#include "corgi/model.hpp"

namespace corgi {

struct SubgraphSample {
  std::vector<std::size_t> items;  // V'_M, increasing
  std::vector<std::size_t> users;  // N(V'_M), increasing
  std::vector<EdgeId> edges;       // E', increasing
  std::vector<char> item_mask;     // per item: in V'_M
};

/// Uniform sample of `item_sample_size` items without replacement, with
/// their incident edges and neighbouring users.
inline SubgraphSample sample_subgraph(const BipartiteGraph& g, std::size_t item_sample_size, std::uint64_t seed) {
  const std::size_t M = g.num_items();
  if (item_sample_size < 1 || item_sample_size > M) {
    throw Error(ErrorCode::SampleTooLarge, "item sample size " + std::to_string(item_sample_size) +
                                               " outside [1, " + std::to_string(M) + "]");
  }
  Rng rng(mix_seed(seed, 0x5a3));
  std::unordered_set<std::size_t> chosen;
  for (std::size_t j = M - item_sample_size; j < M; ++j) {
    std::uniform_int_distribution<std::size_t> pick(0, j);
    const std::size_t t = pick(rng);
    if (!chosen.insert(t).second) {
      chosen.insert(j);
    }
  }
  SubgraphSample s;
  s.items.assign(chosen.begin(), chosen.end());
  std::sort(s.items.begin(), s.items.end());
  s.item_mask.assign(M, 0);
  std::vector<char> user_seen(g.num_users(), 0);
  for (std::size_t m : s.items) {
    s.item_mask[m] = 1;
    for (EdgeId id : g.item_edges(m)) {
      s.edges.push_back(id);
      user_seen[static_cast<std::size_t>(g.edge(id).user)] = 1;
    }
  }
  std::sort(s.edges.begin(), s.edges.end());
  for (std::size_t u = 0; u < user_seen.size(); ++u) {
    if (user_seen[u]) {
      s.users.push_back(u);
    }
  }
  return s;
}

/// The edges of `edges` whose item lies in the sample.
inline std::vector<EdgeId> restrict_to_sample(const BipartiteGraph& g, const std::vector<EdgeId>& edges,
                                              const SubgraphSample& s) {
  std::vector<EdgeId> out;
  for (EdgeId id : edges) {
    if (s.item_mask[static_cast<std::size_t>(g.edge(id).item)]) {
      out.push_back(id);
    }
  }
  return out;
}

/// Forward pass in which layers 1..L-1 use cached CA vectors and layer L
/// recomputes them and writes them back, stamped with `epoch`.
inline LayerState cached_forward(const ContentGraph& cg, const Model& model, EdgeCACache& cache,
                                 const std::vector<EdgeId>& visible, std::int64_t epoch,
                                 const std::vector<EdgeId>& query = {}, Mode mode = Mode::Eval) {
  ForwardOptions opt;
  opt.cache = &cache;
  opt.write_cache = true;
  opt.epoch = epoch;
  return forward(cg, model, mode, visible, query, opt);
}

/// Cache refresh restricted to the sampled subgraph: message passing runs on
/// the visible edges of E' only and exactly those entries are rewritten.
inline LayerState cached_epoch_with_sampling(const ContentGraph& cg, const Model& model, EdgeCACache& cache,
                                             const SubgraphSample& sample, const std::vector<EdgeId>& visible,
                                             std::int64_t epoch) {
  return cached_forward(cg, model, cache, restrict_to_sample(cg.graph(), visible, sample), epoch);
}

}  // namespace corgi
