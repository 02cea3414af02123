#pragma once

// Batched message passing over all visible edges.
//
// Row layout: node v is row v of every node matrix, users first (u -> u)
// then items (m -> U + m). Every visible edge contributes two directed
// rows: row r < E' receives at the user (sender = item), row E' + r
// receives at the item (sender = user). Edge embeddings e^(l) follow the
// same 2E' row layout.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "corgi/edge_cache.hpp"
#include "corgi/error.hpp"
#include "corgi/graph.hpp"
#include "corgi/layers.hpp"
#include "corgi/params.hpp"
#include "corgi/tape.hpp"

namespace corgi {

enum class Mode { Train, Eval };

/// Trainable weights plus the frozen inputs that come with them.
struct Model {
  ModelConfig config;
  ParamStore params;
  /// h^(0) for every node (|V| x C_h); the parameter `node_init` replaces it
  /// when `config.trainable_node_init` is set.
  Matrix node_features;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t content_dim = 0;
  int label_count = 0;
  Task task = Task::Binary;
};

inline std::string layer_param(int layer, const char* name) { return "layer" + std::to_string(layer) + "." + name; }

inline Task task_for(int label_count) { return label_count == 2 ? Task::Binary : Task::Ordinal; }

/// Builds the parameter set for `config` on a graph of the given shape.
/// Matrices are Glorot-uniform, biases zero, node features N(0, 1); all
/// draws come from `seed`.
inline Model init_model(const ModelConfig& config, std::size_t num_users, std::size_t num_items,
                        std::size_t content_dim, int label_count, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  model.num_users = num_users;
  model.num_items = num_items;
  model.content_dim = content_dim;
  model.label_count = label_count;
  model.task = task_for(label_count);

  const auto V = static_cast<Eigen::Index>(num_users + num_items);
  const Eigen::Index ch = config.node_dim;
  const Eigen::Index ce = config.edge_dim;
  const auto D = static_cast<Eigen::Index>(content_dim);
  Rng feature_rng(mix_seed(seed, 1));
  model.node_features = standard_normal(V, ch, feature_rng);

  Rng rng(mix_seed(seed, 2));
  ParamStore& p = model.params;
  if (config.trainable_node_init) {
    p.add("node_init", model.node_features);
  }
  p.add("label_embedding", glorot_uniform(label_count, ce, rng));
  if (config.kind == ModelKind::GcnContentInit) {
    p.add("content_proj.W", glorot_uniform(ch, std::max<Eigen::Index>(D, 1), rng));
    p.add("content_proj.b", Matrix::Zero(1, ch));
  }
  for (int l = 1; l <= config.layers; ++l) {
    p.add(layer_param(l, "P"), glorot_uniform(ch, ch + config.edge_width(l - 1), rng));
    p.add(layer_param(l, "Q"), glorot_uniform(ch, 2 * ch, rng));
    p.add(layer_param(l, "W"), glorot_uniform(ce, ch + ce, rng));
    if (config.uses_content_attention()) {
      p.add(layer_param(l, "W_U"), glorot_uniform(ce, ch, rng));
      p.add(layer_param(l, "W_M"), glorot_uniform(ce, std::max<Eigen::Index>(D, 1), rng));
      if (config.attention == AttentionKind::Concat) {
        p.add(layer_param(l, "p"), glorot_uniform(1, 2 * ce, rng));
      }
      if (config.split_value_projection) {
        p.add(layer_param(l, "W_V"), glorot_uniform(ce, std::max<Eigen::Index>(D, 1), rng));
      }
    }
  }
  const Eigen::Index hidden = config.readout_hidden;
  p.add("readout.W_hidden", glorot_uniform(hidden, 2 * ch, rng));
  p.add("readout.b_hidden", Matrix::Zero(1, hidden));
  p.add("readout.w_out", glorot_uniform(1, hidden, rng));
  p.add("readout.b", Matrix::Zero(1, 1));
  return model;
}

inline Model init_model(const ModelConfig& config, const ContentGraph& cg, std::uint64_t seed) {
  return init_model(config, cg.graph().num_users(), cg.graph().num_items(), cg.dim(), cg.graph().label_count(), seed);
}

struct AttentionRecord {
  EdgeId edge = 0;
  std::size_t user = 0;
  std::size_t item = 0;
  int layer = 0;
  /// 0: the user queries the item's content; 1: the same vector reused on
  /// the item-receiving side.
  int direction = 0;
  std::vector<double> alpha;
};

struct ForwardOptions {
  Mode mode = Mode::Eval;
  /// Seeds the message and readout dropout masks (train mode only).
  std::uint64_t dropout_seed = 0;
  /// When set, layers 1..L-1 take their CA vectors from the cache and
  /// layer L recomputes them; the write-back happens iff `write_cache`.
  EdgeCACache* cache = nullptr;
  bool write_cache = false;
  std::int64_t epoch = 0;
  bool record_attention = false;
  /// Also compute e^(L), which no prediction consumes.
  bool final_edges = false;
};

/// Tape handles produced by one pass.
struct Pass {
  std::vector<Var> h;   // h^(0..L)
  std::vector<Var> e;   // e^(0..L); e^(L) only when computed
  std::vector<bool> has_e;
  std::optional<Var> logits;  // one row per query edge
  std::vector<AttentionRecord> attention;
  std::vector<EdgeId> visible;  // sorted; fixes the edge-row order
};

namespace detail {

inline std::shared_ptr<const Matrix> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  auto mask = std::make_shared<Matrix>(rows, cols);
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < mask->size(); ++i) {
    mask->data()[i] = keep(rng) ? scale : 0.0;
  }
  return mask;
}

/// Per-item mean of the content rows (zero for items without content).
inline Matrix mean_content(const ContentGraph& cg) {
  const std::size_t M = cg.graph().num_items();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(std::max<std::size_t>(cg.dim(), 1)));
  for (std::size_t m = 0; m < M; ++m) {
    if (cg.has_content(m)) {
      out.row(static_cast<Eigen::Index>(m)).head(static_cast<Eigen::Index>(cg.dim())) =
          cg.content(m).colwise().mean();
    }
  }
  return out;
}

}  // namespace detail

/// Records the forward computation on `tape`. `visible` are the edges whose
/// labels enter message passing; `query` are the edges to predict.
/// The visible set is sorted first, so results do not depend on the order
/// the caller lists it in.
inline Pass record_forward(Tape& tape, const Model& model, const ContentGraph& cg, std::vector<EdgeId> visible,
                           const std::vector<EdgeId>& query, const ForwardOptions& opt) {
  std::sort(visible.begin(), visible.end());
  if (std::adjacent_find(visible.begin(), visible.end()) != visible.end()) {
    throw Error(ErrorCode::DuplicateEdge, "an edge is listed twice in the visible set");
  }
  const ModelConfig& cfg = model.config;
  const BipartiteGraph& g = cg.graph();
  if (g.num_users() != model.num_users || g.num_items() != model.num_items || g.label_count() != model.label_count) {
    throw Error(ErrorCode::ShapeMismatch, "model was built for a graph of a different shape");
  }
  if (cfg.uses_content_attention() && cg.dim() != model.content_dim) {
    throw Error(ErrorCode::DimensionMismatch, "model expects content width " + std::to_string(model.content_dim) +
                                                  ", graph has " + std::to_string(cg.dim()));
  }
  const ParamStore& params = model.params;
  const int L = cfg.layers;
  const std::size_t U = g.num_users();
  const auto V = static_cast<Eigen::Index>(U + g.num_items());
  const std::size_t E = visible.size();
  const bool train = opt.mode == Mode::Train;
  const bool attention_model = cfg.uses_content_attention();
  if (opt.cache != nullptr) {
    opt.cache->require_shape(g.num_edges(), cfg.edge_dim);
  }

  Index send(2 * E);
  Index recv(2 * E);
  Index label_row(2 * E);
  for (std::size_t r = 0; r < E; ++r) {
    const auto& edge = g.edge(visible[r]);
    const auto u = edge.user;
    const auto m = static_cast<std::int32_t>(U) + edge.item;
    recv[r] = u;
    send[r] = m;
    recv[E + r] = m;
    send[E + r] = u;
    label_row[r] = edge.label;
    label_row[E + r] = edge.label;
  }
  const IndexPtr send_p = share(std::move(send));
  const IndexPtr recv_p = share(std::move(recv));
  const IndexPtr label_p = share(std::move(label_row));

  // Content attention groups: one per visible edge whose item has content.
  ops::AttentionGroups groups;
  std::vector<std::size_t> group_edge;
  IndexPtr ca_map;
  const bool have_content = attention_model && cg.stacked().rows() > 0;
  if (have_content) {
    Index q, b, e;
    Index map(2 * E, -1);
    for (std::size_t r = 0; r < E; ++r) {
      const auto& edge = g.edge(visible[r]);
      if (!cg.has_content(static_cast<std::size_t>(edge.item))) {
        continue;
      }
      const auto gi = static_cast<std::int32_t>(q.size());
      q.push_back(edge.user);
      b.push_back(cg.row_begin(static_cast<std::size_t>(edge.item)));
      e.push_back(cg.row_end(static_cast<std::size_t>(edge.item)));
      group_edge.push_back(r);
      map[r] = gi;
      if (cfg.bidirectional_ca) {
        map[E + r] = gi;
      }
    }
    groups = ops::AttentionGroups{share(std::move(q)), share(std::move(b)), share(std::move(e))};
    ca_map = share(std::move(map));
  }
  const bool any_groups = have_content && !group_edge.empty();
  std::optional<Var> content_rows;
  if (any_groups) {
    content_rows = tape.constant(cg.stacked());
  }

  Rng drop_rng(mix_seed(opt.dropout_seed, 0xd209));
  Pass pass;
  pass.visible = visible;

  // h^(0)
  Var h0;
  if (cfg.kind == ModelKind::GcnContentInit) {
    Var users = tape.constant(model.node_features.topRows(static_cast<Eigen::Index>(U)));
    Var mean = tape.constant(detail::mean_content(cg));
    Var items = ops::add_row(ops::linear(mean, tape.param(params, "content_proj.W")),
                             tape.param(params, "content_proj.b"));
    h0 = ops::concat_rows(users, items);
  } else if (cfg.trainable_node_init) {
    h0 = tape.param(params, "node_init");
  } else {
    h0 = tape.constant(model.node_features);
  }
  pass.h.push_back(h0);
  Var label_emb = tape.param(params, "label_embedding");
  pass.e.push_back(ops::gather_rows(label_emb, label_p));
  pass.has_e.push_back(true);

  const Eigen::Index ch = cfg.node_dim;
  const Eigen::Index ce = cfg.edge_dim;
  for (int l = 1; l <= L; ++l) {
    const Var h_prev = pass.h.back();
    const Eigen::Index prev_width = cfg.edge_width(l - 1);

    // Messages and node update.
    Var P = tape.param(params, layer_param(l, "P"));
    Var hp = ops::linear(h_prev, ops::slice_cols(P, 0, ch));
    Var P_e = ops::slice_cols(P, ch, prev_width);
    Var msg = l == 1 ? ops::gather2_add_relu(hp, send_p, ops::linear(label_emb, P_e), label_p)
                     : ops::gather2_add_relu(hp, send_p, ops::linear(pass.e.back(), P_e), nullptr);
    if (train && cfg.dropout.message > 0.0) {
      msg = ops::mul_const(msg, detail::dropout_mask(2 * static_cast<Eigen::Index>(E), ch, cfg.dropout.message, drop_rng));
    }
    Var agg = ops::segment_mean(msg, recv_p, V);
    Var h = ops::relu(ops::linear(ops::concat_cols(h_prev, agg), tape.param(params, layer_param(l, "Q"))));
    pass.h.push_back(h);

    const bool last = l == L;
    const bool cached_layer = opt.cache != nullptr && !last;
    const bool write_back = opt.cache != nullptr && last && opt.write_cache;
    const bool need_edges = !last || opt.final_edges;
    const bool need_ca = any_groups && !cached_layer && (need_edges || write_back || opt.record_attention);

    std::optional<Var> ca;
    if (need_ca) {
      Var W_M = tape.param(params, layer_param(l, "W_M"));
      Var keys = ops::linear(*content_rows, W_M);
      Var values = cfg.split_value_projection ? ops::linear(*content_rows, tape.param(params, layer_param(l, "W_V")))
                                              : keys;
      Var queries = ops::linear(h_prev, tape.param(params, layer_param(l, "W_U")));
      std::vector<double> alphas;
      std::vector<double>* sink = opt.record_attention ? &alphas : nullptr;
      if (cfg.attention == AttentionKind::DotProduct) {
        ca = ops::attend(queries, keys, values, groups, ops::ScoreKind::Dot, cfg.attention_slope, sink);
      } else {
        Var p = tape.param(params, layer_param(l, "p"));
        Var a = ops::linear(queries, ops::slice_cols(p, 0, ce));
        Var b = ops::linear(keys, ops::slice_cols(p, ce, ce));
        ca = ops::attend(a, b, values, groups, ops::ScoreKind::Sum, cfg.attention_slope, sink);
      }
      if (opt.record_attention) {
        std::size_t cursor = 0;
        for (std::size_t gi = 0; gi < group_edge.size(); ++gi) {
          const std::size_t r = group_edge[gi];
          const auto& edge = g.edge(visible[r]);
          const std::size_t n = cg.content_count(static_cast<std::size_t>(edge.item));
          AttentionRecord rec;
          rec.edge = visible[r];
          rec.user = static_cast<std::size_t>(edge.user);
          rec.item = static_cast<std::size_t>(edge.item);
          rec.layer = l;
          rec.alpha.assign(alphas.begin() + static_cast<std::ptrdiff_t>(cursor),
                           alphas.begin() + static_cast<std::ptrdiff_t>(cursor + n));
          cursor += n;
          pass.attention.push_back(rec);
          if (cfg.bidirectional_ca) {
            rec.direction = 1;
            pass.attention.push_back(std::move(rec));
          }
        }
      }
    }

    if (write_back) {
      const Matrix* ca_value = ca ? &tape.value(*ca) : nullptr;
      const Eigen::RowVectorXd zero = Eigen::RowVectorXd::Zero(ce);
      for (std::size_t r = 0; r < E; ++r) {
        for (int dir = 0; dir < 2; ++dir) {
          const std::int32_t gi = ca_value != nullptr ? (*ca_map)[dir * E + r] : -1;
          if (gi >= 0) {
            opt.cache->write(visible[r], dir, ca_value->row(gi), opt.epoch);
          } else {
            opt.cache->write(visible[r], dir, zero, opt.epoch);
          }
        }
      }
    }

    if (!need_edges) {
      pass.e.push_back(Var{});
      pass.has_e.push_back(false);
      continue;
    }
    Var W = tape.param(params, layer_param(l, "W"));
    Var hw = ops::linear(h, ops::slice_cols(W, 0, ch));
    Var lw = ops::linear(label_emb, ops::slice_cols(W, ch, ce));
    Var e_prime = ops::gather2_add_relu(hw, send_p, lw, label_p);
    Var e = e_prime;
    if (cached_layer && attention_model) {
      Matrix stored(2 * static_cast<Eigen::Index>(E), ce);
      for (std::size_t r = 0; r < E; ++r) {
        stored.row(static_cast<Eigen::Index>(r)) = opt.cache->entry(visible[r], 0);
        stored.row(static_cast<Eigen::Index>(E + r)) = opt.cache->entry(visible[r], 1);
      }
      Var c = tape.constant(std::move(stored));
      e = cfg.combination == Combination::Add ? ops::add(e_prime, c) : ops::concat_cols(e_prime, c);
    } else if (ca) {
      e = cfg.combination == Combination::Add ? ops::add_gathered(e_prime, *ca, ca_map)
                                              : ops::concat_cols(e_prime, ops::gather_rows_or_zero(*ca, ca_map));
    } else if (attention_model && cfg.combination == Combination::Concat) {
      e = ops::concat_cols(e_prime, tape.constant(Matrix::Zero(2 * static_cast<Eigen::Index>(E), ce)));
    }
    pass.e.push_back(e);
    pass.has_e.push_back(true);
  }

  if (!query.empty()) {
    Index qu(query.size());
    Index qm(query.size());
    for (std::size_t i = 0; i < query.size(); ++i) {
      const auto& edge = g.edge(query[i]);
      qu[i] = edge.user;
      qm[i] = static_cast<std::int32_t>(U) + edge.item;
    }
    Var h = pass.h.back();
    Var Wh = tape.param(params, "readout.W_hidden");
    Var a = ops::linear(h, ops::slice_cols(Wh, 0, ch));
    Var b = ops::add_row(ops::linear(h, ops::slice_cols(Wh, ch, ch)), tape.param(params, "readout.b_hidden"));
    Var hidden = ops::gather2_add_relu(a, share(std::move(qu)), b, share(std::move(qm)));
    if (train && cfg.dropout.mlp > 0.0) {
      const Matrix& hv = tape.value(hidden);
      hidden = ops::mul_const(hidden, detail::dropout_mask(hv.rows(), hv.cols(), cfg.dropout.mlp, drop_rng));
    }
    pass.logits = ops::add_row(ops::linear(hidden, tape.param(params, "readout.w_out")),
                               tape.param(params, "readout.b"));
  }
  return pass;
}

/// Values of one pass (see the row layout at the top of this file).
struct LayerState {
  std::vector<Matrix> h;  // h^(0..L), |V| rows
  std::vector<Matrix> e;  // e^(0..L), 2|visible| rows; empty when not computed
  std::vector<EdgeId> visible;
  std::vector<AttentionRecord> attention;
  Matrix logits;  // one row per query edge
};

inline LayerState forward(const ContentGraph& cg, const Model& model, Mode mode, const std::vector<EdgeId>& visible,
                          const std::vector<EdgeId>& query = {}, ForwardOptions opt = {}) {
  opt.mode = mode;
  Tape tape(false);
  Pass pass = record_forward(tape, model, cg, visible, query, opt);
  LayerState s;
  for (Var h : pass.h) {
    s.h.push_back(tape.value(h));
  }
  for (std::size_t l = 0; l < pass.e.size(); ++l) {
    s.e.push_back(pass.has_e[l] ? tape.value(pass.e[l]) : Matrix{});
  }
  s.visible = std::move(pass.visible);
  s.attention = std::move(pass.attention);
  if (pass.logits) {
    s.logits = tape.value(*pass.logits);
  }
  return s;
}

/// Prediction scores for `query` (probabilities for binary tasks).
inline std::vector<double> predict(const ContentGraph& cg, const Model& model, const std::vector<EdgeId>& visible,
                                   const std::vector<EdgeId>& query, EdgeCACache* cache = nullptr) {
  ForwardOptions opt;
  opt.cache = cache;
  LayerState s = forward(cg, model, Mode::Eval, visible, query, opt);
  std::vector<double> out(query.size());
  for (std::size_t i = 0; i < query.size(); ++i) {
    out[i] = model.task == Task::Binary ? sigmoid(s.logits(static_cast<Eigen::Index>(i), 0))
                                        : s.logits(static_cast<Eigen::Index>(i), 0);
  }
  return out;
}

}  // namespace corgi
