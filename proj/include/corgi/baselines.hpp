#pragma once

// Content-free and content-initialised GCN baselines. All three run the
// same message-passing code as the main model with the attention term
// switched off; they differ only in how h^(0) is formed.

#include <string>
#include <vector>

#include "corgi/error.hpp"
#include "corgi/model.hpp"

namespace corgi {

namespace detail {

inline void require_kind(const Model& model, ModelKind kind) {
  if (model.config.kind != kind) {
    throw Error(ErrorCode::InvalidConfig, "expected a " + to_string(kind) + " model, got " + to_string(model.config.kind));
  }
}

}  // namespace detail

/// Item h^(0) = Linear(mean of the item's content rows); no CA term.
inline LayerState gcn_content_init_forward(const ContentGraph& cg, const Model& model, Mode mode,
                                           const std::vector<EdgeId>& visible, const std::vector<EdgeId>& query = {},
                                           std::uint64_t dropout_seed = 0) {
  detail::require_kind(model, ModelKind::GcnContentInit);
  if (cg.dim() != model.content_dim) {
    throw Error(ErrorCode::ShapeMismatch, "content width " + std::to_string(cg.dim()) + " but the projection expects " +
                                              std::to_string(model.content_dim));
  }
  ForwardOptions opt;
  opt.dropout_seed = dropout_seed;
  return forward(cg, model, mode, visible, query, opt);
}

/// Random node init, label-initialised edges, no content.
inline LayerState gcn_grape_forward(const ContentGraph& cg, const Model& model, Mode mode,
                                    const std::vector<EdgeId>& visible, const std::vector<EdgeId>& query = {},
                                    std::uint64_t dropout_seed = 0) {
  detail::require_kind(model, ModelKind::GcnGrape);
  ForwardOptions opt;
  opt.dropout_seed = dropout_seed;
  return forward(cg, model, mode, visible, query, opt);
}

/// Same computation as gcn_grape_forward; kept as its own model kind so that
/// runs and checkpoints say which comparison they belong to.
inline LayerState gcn_label_edges_forward(const ContentGraph& cg, const Model& model, Mode mode,
                                          const std::vector<EdgeId>& visible, const std::vector<EdgeId>& query = {},
                                          std::uint64_t dropout_seed = 0) {
  detail::require_kind(model, ModelKind::GcnLabelEdges);
  ForwardOptions opt;
  opt.dropout_seed = dropout_seed;
  return forward(cg, model, mode, visible, query, opt);
}

/// Copies every parameter of `from` that `to` also has (same name and
/// shape). Returns the number copied.
inline std::size_t copy_shared_params(const Model& from, Model& to) {
  std::size_t copied = 0;
  for (std::size_t i = 0; i < from.params.size(); ++i) {
    const auto& name = from.params.name(i);
    if (!to.params.contains(name)) {
      continue;
    }
    Matrix& target = to.params.at(name);
    if (target.rows() != from.params.at(i).rows() || target.cols() != from.params.at(i).cols()) {
      throw Error(ErrorCode::ShapeMismatch, "parameter '" + name + "' differs in shape between the two models");
    }
    target = from.params.at(i);
    ++copied;
  }
  to.node_features = from.node_features;
  return copied;
}

}  // namespace corgi
