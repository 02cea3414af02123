#pragma once

// Single-edge / single-node building blocks of the model, on plain vectors.
// The batched forward pass in model.hpp computes the same quantities for
// all edges at once; these are the per-element definitions.

#include <algorithm>
#include <string>
#include <vector>

#include "corgi/error.hpp"
#include "corgi/tensor.hpp"

namespace corgi {

enum class ModelKind { Corgi, GcnContentInit, GcnGrape, GcnLabelEdges };
enum class AttentionKind { Concat, DotProduct };
enum class Combination { Add, Concat };
enum class Aggregation { Mean };
enum class Task { Binary, Ordinal };

struct DropoutRates {
  double message = 0.3;
  double edge = 0.3;
  double mlp = 0.3;
};

struct ModelConfig {
  ModelKind kind = ModelKind::Corgi;
  int layers = 3;
  int node_dim = 64;
  int edge_dim = 64;
  int readout_hidden = 256;
  AttentionKind attention = AttentionKind::DotProduct;
  Combination combination = Combination::Add;
  bool bidirectional_ca = true;
  Aggregation aggregation = Aggregation::Mean;
  DropoutRates dropout;
  bool trainable_node_init = false;
  /// Separate value projection W_V instead of reusing W_M for the values.
  bool split_value_projection = false;
  double attention_slope = 0.2;

  bool uses_content_attention() const { return kind == ModelKind::Corgi; }

  /// Width of e^(l): C_e, or 2 C_e when CA is concatenated (l >= 1).
  int edge_width(int layer) const {
    return layer >= 1 && uses_content_attention() && combination == Combination::Concat ? 2 * edge_dim : edge_dim;
  }

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
    if (layers < 1) bad("model.layers must be >= 1");
    if (node_dim < 1 || edge_dim < 1 || readout_hidden < 1) bad("model dimensions must be positive");
    for (double r : {dropout.message, dropout.edge, dropout.mlp}) {
      if (!(r >= 0.0 && r < 1.0)) bad("dropout rates must lie in [0, 1)");
    }
    if (!(attention_slope >= 0.0)) bad("attention slope must be non-negative");
  }
};

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Corgi: return "corgi";
    case ModelKind::GcnContentInit: return "gcn-content-init";
    case ModelKind::GcnGrape: return "gcn-grape";
    case ModelKind::GcnLabelEdges: return "gcn-label-edges";
  }
  return "?";
}

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) {
    throw Error(ErrorCode::ShapeMismatch, what);
  }
}

inline Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

inline Vector relu_vec(const Vector& v) { return (v.array() > 0.0).select(v, 0.0); }

}  // namespace detail

/// m = ReLU(P [h_j, e_ij]).
inline Vector compute_message(const Vector& h_j, const Vector& e_ij, const Matrix& P) {
  detail::require(P.cols() == h_j.size() + e_ij.size(),
                  "message weight has " + std::to_string(P.cols()) + " columns for input of width " +
                      std::to_string(h_j.size() + e_ij.size()));
  return detail::relu_vec(P * detail::concat(h_j, e_ij));
}

/// h_i = ReLU(Q [h_i_prev, mean(messages)]). The messages are summed in a
/// canonical (lexicographic) order so the result does not depend on the
/// order they are passed in. No messages gives a zero mean.
inline Vector update_node(const Vector& h_prev, std::vector<Vector> messages, const Matrix& Q) {
  const Eigen::Index width = messages.empty() ? Q.cols() - h_prev.size() : messages.front().size();
  for (const auto& m : messages) {
    detail::require(m.size() == width, "messages differ in width");
  }
  detail::require(Q.cols() == h_prev.size() + width, "node update weight does not match [h, mean(m)]");
  std::sort(messages.begin(), messages.end(), [](const Vector& a, const Vector& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  });
  Vector mean = Vector::Zero(width);
  for (const auto& m : messages) {
    mean += m;
  }
  if (!messages.empty()) {
    mean /= static_cast<double>(messages.size());
  }
  return detail::relu_vec(Q * detail::concat(h_prev, mean));
}

struct AttentionWeights {
  Matrix W_U;  // C_e x C_h
  Matrix W_M;  // C_e x D
  Vector p;    // 2 C_e, concat attention only
  Matrix W_V;  // C_e x D when values use their own projection; empty otherwise
};

/// Unnormalised score between a query node and one content row.
inline double attention_coefficient(const Vector& h_query, const Vector& z, const AttentionWeights& w,
                                    AttentionKind kind, double slope = 0.2) {
  detail::require(w.W_U.cols() == h_query.size(), "W_U does not match the query width");
  detail::require(w.W_M.cols() == z.size(), "W_M does not match the content width");
  detail::require(w.W_U.rows() == w.W_M.rows(), "W_U and W_M project to different widths");
  const Vector q = w.W_U * h_query;
  const Vector k = w.W_M * z;
  if (kind == AttentionKind::DotProduct) {
    return leaky_relu(q.dot(k), slope);
  }
  detail::require(w.p.size() == q.size() + k.size(), "p must have width 2 C_e");
  return leaky_relu(w.p.dot(detail::concat(q, k)), slope);
}

struct ContentAttention {
  Vector e_ca;
  Vector alpha;  // empty for an item without content
};

/// e_CA = sum_k alpha_k W_M z_k with alpha = softmax of the coefficients.
/// An item without content rows gives e_CA = 0 and no alpha.
inline ContentAttention content_attention_edge(const Vector& h_query, const Matrix& Z, const AttentionWeights& w,
                                               AttentionKind kind, double slope = 0.2) {
  ContentAttention out;
  out.e_ca = Vector::Zero(w.W_M.rows());
  if (Z.rows() == 0) {
    return out;
  }
  Vector scores(Z.rows());
  for (Eigen::Index k = 0; k < Z.rows(); ++k) {
    scores[k] = attention_coefficient(h_query, Z.row(k).transpose(), w, kind, slope);
  }
  out.alpha = softmax(scores);
  const Matrix& values = w.W_V.size() != 0 ? w.W_V : w.W_M;
  for (Eigen::Index k = 0; k < Z.rows(); ++k) {
    out.e_ca += out.alpha[k] * (values * Z.row(k).transpose());
  }
  return out;
}

/// e' = ReLU(W [h_j, e_ij^(0)]); Add returns e' + e_CA, Concat [e', e_CA].
inline Vector update_edge(const Vector& h_j, const Vector& e_initial, const Vector& e_ca, const Matrix& W,
                          Combination combination) {
  detail::require(W.cols() == h_j.size() + e_initial.size(), "edge weight does not match [h_j, e^(0)]");
  const Vector e_prime = detail::relu_vec(W * detail::concat(h_j, e_initial));
  if (combination == Combination::Concat) {
    return detail::concat(e_prime, e_ca);
  }
  detail::require(e_ca.size() == e_prime.size(), "Add combination needs e_CA of width " +
                                                     std::to_string(e_prime.size()) + ", got " +
                                                     std::to_string(e_ca.size()));
  return e_prime + e_ca;
}

struct ReadoutWeights {
  Matrix W_hidden;  // H x 2 C_h
  Vector b_hidden;  // H
  Vector w_out;     // H
  double b = 0.0;
};

/// MLP over [h_u, h_m]: one ReLU hidden layer then a scalar; sigmoid for
/// binary tasks, raw score for ordinal ones.
inline double readout(const Vector& h_u, const Vector& h_m, const ReadoutWeights& w, Task task) {
  detail::require(w.W_hidden.cols() == h_u.size() + h_m.size(), "readout weight does not match [h_u, h_m]");
  detail::require(w.b_hidden.size() == w.W_hidden.rows() && w.w_out.size() == w.W_hidden.rows(),
                  "readout hidden width mismatch");
  const Vector hidden = detail::relu_vec(w.W_hidden * detail::concat(h_u, h_m) + w.b_hidden);
  const double score = w.w_out.dot(hidden) + w.b;
  return task == Task::Binary ? sigmoid(score) : score;
}

}  // namespace corgi
