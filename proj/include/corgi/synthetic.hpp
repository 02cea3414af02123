#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <unordered_set>
#include <vector>

#include "corgi/error.hpp"
#include "corgi/graph.hpp"

namespace corgi {

struct SyntheticConfig {
  std::size_t num_users = 1000;
  std::size_t num_items = 1000;
  std::size_t num_edges = 100000;
  std::size_t vocab_size = 5;
  double word_prob = 0.5;
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  BipartiteGraph graph;
  ContentStore content{1, 1};
  std::vector<int> focus;                    // per user
  std::vector<std::vector<int>> item_words;  // per item, increasing
};

inline int ground_truth_label(const std::vector<int>& item_words, int focus) {
  return std::find(item_words.begin(), item_words.end(), focus) != item_words.end() ? 1 : 0;
}

/// Random bipartite graph with one-hot word content. Every item holds each
/// word independently with `word_prob`; every user has one uniform focus
/// word; `num_edges` distinct pairs are drawn uniformly (Floyd's algorithm)
/// and emitted in user-major order.
inline SyntheticDataset generate(const SyntheticConfig& cfg) {
  if (cfg.vocab_size < 1) {
    throw Error(ErrorCode::InvalidConfig, "vocab_size must be at least 1");
  }
  if (!(cfg.word_prob > 0.0 && cfg.word_prob < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "word_prob must lie in (0, 1)");
  }
  if (cfg.num_users == 0 || cfg.num_items == 0) {
    throw Error(ErrorCode::InvalidConfig, "synthetic graph needs users and items");
  }
  const std::uint64_t pairs = static_cast<std::uint64_t>(cfg.num_users) * cfg.num_items;
  if (cfg.num_edges > pairs) {
    throw Error(ErrorCode::TooManyEdges, std::to_string(cfg.num_edges) + " edges requested but only " +
                                             std::to_string(pairs) + " user-item pairs exist");
  }

  SyntheticDataset ds;
  Rng word_rng(mix_seed(cfg.seed, 11));
  std::bernoulli_distribution has_word(cfg.word_prob);
  ds.item_words.resize(cfg.num_items);
  for (auto& words : ds.item_words) {
    for (std::size_t w = 0; w < cfg.vocab_size; ++w) {
      if (has_word(word_rng)) {
        words.push_back(static_cast<int>(w));
      }
    }
  }

  Rng focus_rng(mix_seed(cfg.seed, 12));
  std::uniform_int_distribution<int> pick_word(0, static_cast<int>(cfg.vocab_size) - 1);
  ds.focus.resize(cfg.num_users);
  for (auto& f : ds.focus) {
    f = pick_word(focus_rng);
  }

  Rng edge_rng(mix_seed(cfg.seed, 13));
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(cfg.num_edges * 2);
  for (std::uint64_t j = pairs - cfg.num_edges; j < pairs; ++j) {
    std::uniform_int_distribution<std::uint64_t> pick(0, j);
    const std::uint64_t t = pick(edge_rng);
    if (!chosen.insert(t).second) {
      chosen.insert(j);
    }
  }
  std::vector<std::uint64_t> sorted(chosen.begin(), chosen.end());
  std::sort(sorted.begin(), sorted.end());

  std::vector<LabeledEdge> edges;
  edges.reserve(sorted.size());
  for (std::uint64_t code : sorted) {
    LabeledEdge e;
    e.user = static_cast<std::int32_t>(code / cfg.num_items);
    e.item = static_cast<std::int32_t>(code % cfg.num_items);
    e.label = ground_truth_label(ds.item_words[e.item], ds.focus[e.user]);
    edges.push_back(e);
  }
  ds.graph = build_graph(std::move(edges), cfg.num_users, cfg.num_items, 2);

  ds.content = ContentStore(cfg.vocab_size, cfg.vocab_size);
  for (std::size_t m = 0; m < cfg.num_items; ++m) {
    const auto& words = ds.item_words[m];
    if (words.empty()) {
      continue;
    }
    Matrix rows = Matrix::Zero(static_cast<Eigen::Index>(words.size()), static_cast<Eigen::Index>(cfg.vocab_size));
    for (std::size_t k = 0; k < words.size(); ++k) {
      rows(static_cast<Eigen::Index>(k), words[k]) = 1.0;
    }
    ds.content.set(m, rows);
  }
  return ds;
}

/// Word identity of every content row, recovered from one-hot rows
/// (argmax per row). Items without content get an empty list.
inline std::vector<std::vector<int>> words_of_rows(const ContentGraph& cg) {
  std::vector<std::vector<int>> out(cg.graph().num_items());
  for (std::size_t m = 0; m < out.size(); ++m) {
    for (auto r = cg.row_begin(m); r < cg.row_end(m); ++r) {
      Eigen::Index arg = 0;
      cg.stacked().row(r).maxCoeff(&arg);
      out[m].push_back(static_cast<int>(arg));
    }
  }
  return out;
}

}  // namespace corgi
