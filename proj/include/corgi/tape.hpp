#pragma once

// Matrix-level reverse-mode differentiation. A Tape records every operation
// of one forward pass; backward() walks it once in reverse creation order.
// Index-heavy graph operations (gathers, segment reductions, per-pair
// attention terms) are single fused nodes so that edge-sized intermediates
// are not materialised more than once.

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "corgi/error.hpp"
#include "corgi/params.hpp"
#include "corgi/tensor.hpp"

namespace corgi {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

using Index = std::vector<std::int32_t>;
using IndexPtr = std::shared_ptr<const Index>;

inline IndexPtr share(Index idx) { return std::make_shared<const Index>(std::move(idx)); }

class Tape {
 public:
  /// Receives the incoming gradient and the node's own forward value.
  using BackwardFn = std::function<void(Tape&, const Matrix& grad, const Matrix& self)>;

  /// With `grad_enabled == false` nothing is retained for a reverse pass.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Matrix value) { return push(std::move(value), false); }

  /// Parameter leaf, recorded once per tape even when requested repeatedly.
  Var param(const ParamStore& store, const std::string& name) {
    const std::size_t index = store.index(name);
    if (auto it = param_nodes_.find(index); it != param_nodes_.end()) {
      return Var{this, it->second};
    }
    Var v = push(store.at(index), grad_enabled_);
    nodes_[v.id].param = static_cast<std::int64_t>(index);
    param_nodes_.emplace(index, v.id);
    return v;
  }

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  void accumulate(Var v, const Matrix& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) {
      return;
    }
    if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Gradient buffer of `v`, zero-filled on first access.
  Matrix& grad_slot(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  /// Records a node computed from `parents`; it needs a gradient iff one of
  /// the parents does, otherwise `backward` is discarded.
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
    bool needs = false;
    for (Var p : parents) {
      needs = needs || nodes_[p.id].needs_grad;
    }
    Var v = push(std::move(value), needs);
    if (needs) {
      nodes_[v.id].backward = std::move(backward);
    }
    return v;
  }

  /// Reverse pass from a 1x1 node. Returns d(loss)/d(param) for every entry
  /// of `store`; parameters the loss does not reach get zeros. Values are
  /// released during the sweep, so a tape is differentiated at most once.
  Gradients backward(Var loss, const ParamStore& store) {
    Node& root = nodes_[loss.id];
    if (root.value.rows() != 1 || root.value.cols() != 1) {
      throw Error(ErrorCode::ShapeMismatch, "backward() needs a 1x1 loss");
    }
    if (!root.needs_grad) {
      throw Error(ErrorCode::DisconnectedGraph, "loss does not depend on any parameter");
    }
    Gradients grads = store.zeros_like();
    root.grad = Matrix::Constant(1, 1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() != 0 && n.needs_grad) {
        if (n.param >= 0) {
          grads.at(static_cast<std::size_t>(n.param)) += n.grad;
        } else if (n.backward) {
          Matrix g = std::move(n.grad);
          n.backward(*this, g, n.value);
        }
      }
      n.grad = Matrix{};
      n.backward = nullptr;
      if (n.param < 0) {
        n.value = Matrix{};
      }
    }
    return grads;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardFn backward;
    std::int64_t param = -1;
    bool needs_grad = false;
  };

  Var push(Matrix value, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
};

namespace ops {

inline void check(bool ok, const std::string& what) {
  if (!ok) {
    throw Error(ErrorCode::ShapeMismatch, what);
  }
}

inline std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

/// ReLU that never produces -0.0, so that adding an exact zero is a no-op.
inline Matrix relu_value(const Matrix& x) { return (x.array() > 0.0).select(x, 0.0); }

/// y = x * w^T  (x: n x in, w: out x in).
inline Var linear(Var x, Var w) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  const Matrix& wv = t.value(w);
  check(xv.cols() == wv.cols(), "linear: input " + shape(xv) + " vs weight " + shape(wv));
  Matrix y = xv * wv.transpose();
  return t.record(std::move(y), {x, w}, [x, w](Tape& t, const Matrix& g, const Matrix& y) {
    if (t.needs_grad(x)) {
      t.accumulate(x, g * t.value(w));
    }
    if (t.needs_grad(w)) {
      t.grad_slot(w).noalias() += g.transpose() * t.value(x);
    }
  });
}

inline Var add(Var a, Var b) {
  Tape& t = *a.tape;
  check(t.value(a).rows() == t.value(b).rows() && t.value(a).cols() == t.value(b).cols(),
        "add: " + shape(t.value(a)) + " vs " + shape(t.value(b)));
  Matrix y = t.value(a) + t.value(b);
  return t.record(std::move(y), {a, b}, [a, b](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

/// Adds a 1 x C row to every row of x.
inline Var add_row(Var x, Var bias) {
  Tape& t = *x.tape;
  const Matrix& b = t.value(bias);
  check(b.rows() == 1 && b.cols() == t.value(x).cols(), "add_row: bias " + shape(b) + " for " + shape(t.value(x)));
  Matrix y = t.value(x).rowwise() + b.row(0);
  return t.record(std::move(y), {x, bias}, [x, bias](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, g);
    if (t.needs_grad(bias)) {
      t.grad_slot(bias) += g.colwise().sum();
    }
  });
}

inline Var relu(Var x) {
  Tape& t = *x.tape;
  Matrix y = relu_value(t.value(x));
  return t.record(std::move(y), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, (y.array() > 0.0).select(g, 0.0));
  });
}

inline Var leaky_relu(Var x, double slope) {
  Tape& t = *x.tape;
  Matrix y = corgi::leaky_relu(t.value(x), slope);
  return t.record(std::move(y), {x}, [x, slope](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, (t.value(x).array() > 0.0).select(g, slope * g));
  });
}

/// Elementwise product with a fixed matrix (dropout masks).
inline Var mul_const(Var x, std::shared_ptr<const Matrix> mask) {
  Tape& t = *x.tape;
  check(mask->rows() == t.value(x).rows() && mask->cols() == t.value(x).cols(), "mul_const: shape mismatch");
  Matrix y = t.value(x).cwiseProduct(*mask);
  return t.record(std::move(y), {x}, [x, mask](Tape& t, const Matrix& g, const Matrix& y) { t.accumulate(x, g.cwiseProduct(*mask)); });
}

inline Var concat_cols(Var a, Var b) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  check(av.rows() == bv.rows(), "concat_cols: " + shape(av) + " vs " + shape(bv));
  Matrix y(av.rows(), av.cols() + bv.cols());
  y.leftCols(av.cols()) = av;
  y.rightCols(bv.cols()) = bv;
  const auto ac = av.cols();
  const auto bc = bv.cols();
  return t.record(std::move(y), {a, b}, [a, b, ac, bc](Tape& t, const Matrix& g, const Matrix& y) {
    if (t.needs_grad(a)) {
      t.accumulate(a, g.leftCols(ac));
    }
    if (t.needs_grad(b)) {
      t.accumulate(b, g.rightCols(bc));
    }
  });
}

inline Var concat_rows(Var a, Var b) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  check(av.cols() == bv.cols(), "concat_rows: " + shape(av) + " vs " + shape(bv));
  Matrix y(av.rows() + bv.rows(), av.cols());
  y.topRows(av.rows()) = av;
  y.bottomRows(bv.rows()) = bv;
  const auto ar = av.rows();
  const auto br = bv.rows();
  return t.record(std::move(y), {a, b}, [a, b, ar, br](Tape& t, const Matrix& g, const Matrix& y) {
    if (t.needs_grad(a)) {
      t.accumulate(a, g.topRows(ar));
    }
    if (t.needs_grad(b)) {
      t.accumulate(b, g.bottomRows(br));
    }
  });
}

inline Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  check(start >= 0 && count >= 0 && start + count <= xv.cols(), "slice_cols: out of range for " + shape(xv));
  Matrix y = xv.middleCols(start, count);
  return t.record(std::move(y), {x}, [x, start, count](Tape& t, const Matrix& g, const Matrix& y) {
    t.grad_slot(x).middleCols(start, count) += g;
  });
}

inline Var gather_rows(Var x, IndexPtr idx) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  Matrix y(static_cast<Eigen::Index>(idx->size()), xv.cols());
  for (std::size_t r = 0; r < idx->size(); ++r) {
    check((*idx)[r] >= 0 && (*idx)[r] < xv.rows(), "gather_rows: index " + std::to_string((*idx)[r]) +
                                                        " outside " + shape(xv));
    y.row(static_cast<Eigen::Index>(r)) = xv.row((*idx)[r]);
  }
  return t.record(std::move(y), {x}, [x, idx](Tape& t, const Matrix& g, const Matrix& y) {
    Matrix& dx = t.grad_slot(x);
    for (std::size_t r = 0; r < idx->size(); ++r) {
      dx.row((*idx)[r]) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

/// Like gather_rows, but index -1 yields a zero row.
inline Var gather_rows_or_zero(Var x, IndexPtr idx) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(idx->size()), xv.cols());
  for (std::size_t r = 0; r < idx->size(); ++r) {
    if ((*idx)[r] >= 0) {
      y.row(static_cast<Eigen::Index>(r)) = xv.row((*idx)[r]);
    }
  }
  return t.record(std::move(y), {x}, [x, idx](Tape& t, const Matrix& g, const Matrix& y) {
    Matrix& dx = t.grad_slot(x);
    for (std::size_t r = 0; r < idx->size(); ++r) {
      if ((*idx)[r] >= 0) {
        dx.row((*idx)[r]) += g.row(static_cast<Eigen::Index>(r));
      }
    }
  });
}

/// y[r] = x[r] + y_src[idx[r]] where idx[r] >= 0; rows with -1 are copied
/// from x untouched.
inline Var add_gathered(Var x, Var src, IndexPtr idx) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  const Matrix& sv = t.value(src);
  check(xv.cols() == sv.cols() && static_cast<std::size_t>(xv.rows()) == idx->size(),
        "add_gathered: " + shape(xv) + " vs " + shape(sv));
  Matrix y = xv;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    if ((*idx)[r] >= 0) {
      y.row(r) += sv.row((*idx)[r]);
    }
  }
  return t.record(std::move(y), {x, src}, [x, src, idx](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, g);
    if (t.needs_grad(src)) {
      Matrix& ds = t.grad_slot(src);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        if ((*idx)[r] >= 0) {
          ds.row((*idx)[r]) += g.row(r);
        }
      }
    }
  });
}

/// y[r] = relu(a[ia[r]] + b[ib[r]]); a null `ib` means b is read row by row.
inline Var gather2_add_relu(Var a, IndexPtr ia, Var b, IndexPtr ib) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  check(av.cols() == bv.cols(), "gather2_add_relu: " + shape(av) + " vs " + shape(bv));
  const auto rows = static_cast<Eigen::Index>(ia->size());
  check(ib ? ib->size() == ia->size() : bv.rows() == rows, "gather2_add_relu: row count mismatch");
  Matrix y(rows, av.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index rb = ib ? (*ib)[r] : r;
    y.row(r) = av.row((*ia)[r]) + bv.row(rb);
  }
  y = relu_value(y);
  return t.record(std::move(y), {a, b}, [a, b, ia, ib](Tape& t, const Matrix& g, const Matrix& y) {
    Matrix masked = (y.array() > 0.0).select(g, 0.0);
    if (t.needs_grad(a)) {
      Matrix& ga = t.grad_slot(a);
      for (Eigen::Index r = 0; r < masked.rows(); ++r) {
        ga.row((*ia)[r]) += masked.row(r);
      }
    }
    if (t.needs_grad(b)) {
      if (ib) {
        Matrix& gb = t.grad_slot(b);
        for (Eigen::Index r = 0; r < masked.rows(); ++r) {
          gb.row((*ib)[r]) += masked.row(r);
        }
      } else {
        t.accumulate(b, masked);
      }
    }
  });
}

/// Mean of the rows of x sharing a segment id, summed in row order.
/// Segments without rows give zero rows.
inline Var segment_mean(Var x, IndexPtr seg, Eigen::Index segments) {
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  check(static_cast<std::size_t>(xv.rows()) == seg->size(), "segment_mean: one segment id per row required");
  Matrix y = Matrix::Zero(segments, xv.cols());
  auto count = std::make_shared<std::vector<double>>(static_cast<std::size_t>(segments), 0.0);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    y.row((*seg)[r]) += xv.row(r);
    (*count)[(*seg)[r]] += 1.0;
  }
  for (Eigen::Index s = 0; s < segments; ++s) {
    if ((*count)[s] > 0.0) {
      y.row(s) /= (*count)[s];
    }
  }
  return t.record(std::move(y), {x}, [x, seg, count](Tape& t, const Matrix& g, const Matrix& y) {
    Matrix& dx = t.grad_slot(x);
    for (Eigen::Index r = 0; r < dx.rows(); ++r) {
      dx.row(r) += g.row((*seg)[r]) / (*count)[(*seg)[r]];
    }
  });
}

enum class ScoreKind {
  /// score = q[i] . k[j]
  Dot,
  /// score = q[i] + k[j]  (q and k are single columns)
  Sum,
};

/// Grouped attention. Group g pairs query row `query[g]` with key/value rows
/// [begin[g], end[g]); the output row g is sum_k alpha_k v[k] where
/// alpha = softmax_k(leaky_relu(score(q, k_k), slope)). Every group must be
/// non-empty. The probabilities are written to `alphas` (flattened, group
/// after group) when it is non-null.
struct AttentionGroups {
  IndexPtr query;
  IndexPtr begin;
  IndexPtr end;
};

inline Var attend(Var q, Var k, Var v, const AttentionGroups& groups, ScoreKind kind, double slope,
                  std::vector<double>* alphas = nullptr) {
  Tape& t = *q.tape;
  const Matrix& qv = t.value(q);
  const Matrix& kv = t.value(k);
  const Matrix& vv = t.value(v);
  check(kv.rows() == vv.rows(), "attend: keys " + shape(kv) + " vs values " + shape(vv));
  check(kind == ScoreKind::Dot ? qv.cols() == kv.cols() : (qv.cols() == 1 && kv.cols() == 1),
        "attend: query " + shape(qv) + " vs keys " + shape(kv));
  const std::size_t n = groups.query->size();
  check(groups.begin->size() == n && groups.end->size() == n, "attend: group arrays differ in length");

  auto raw = std::make_shared<std::vector<double>>();
  auto prob = std::make_shared<std::vector<double>>();
  auto offset = std::make_shared<std::vector<std::size_t>>(n + 1, 0);
  for (std::size_t g = 0; g < n; ++g) {
    const auto b = (*groups.begin)[g];
    const auto e = (*groups.end)[g];
    check(e > b, "attend: empty group");
    (*offset)[g + 1] = (*offset)[g] + static_cast<std::size_t>(e - b);
  }
  raw->resize(offset->back());
  prob->resize(offset->back());

  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(n), vv.cols());
  for (std::size_t g = 0; g < n; ++g) {
    const auto qi = (*groups.query)[g];
    const auto b = (*groups.begin)[g];
    const auto e = (*groups.end)[g];
    double* rs = raw->data() + (*offset)[g];
    double* ps = prob->data() + (*offset)[g];
    for (auto j = b; j < e; ++j) {
      const double s = kind == ScoreKind::Dot ? qv.row(qi).dot(kv.row(j)) : qv(qi, 0) + kv(j, 0);
      rs[j - b] = s;
      ps[j - b] = corgi::leaky_relu(s, slope);
    }
    const auto p = softmax(std::span<const double>(ps, static_cast<std::size_t>(e - b)));
    for (auto j = b; j < e; ++j) {
      ps[j - b] = p[static_cast<std::size_t>(j - b)];
      y.row(static_cast<Eigen::Index>(g)) += ps[j - b] * vv.row(j);
    }
  }
  if (alphas != nullptr) {
    *alphas = *prob;
  }
  return t.record(std::move(y), {q, k, v}, [q, k, v, groups, kind, slope, raw, prob, offset](Tape& t, const Matrix& g, const Matrix& y) {
    const Matrix& qv = t.value(q);
    const Matrix& kv = t.value(k);
    const Matrix& vv = t.value(v);
    const bool dq = t.needs_grad(q);
    const bool dk = t.needs_grad(k);
    const bool dv = t.needs_grad(v);
    Matrix* gq = dq ? &t.grad_slot(q) : nullptr;
    Matrix* gk = dk ? &t.grad_slot(k) : nullptr;
    Matrix* gv = dv ? &t.grad_slot(v) : nullptr;
    std::vector<double> dalpha;
    for (std::size_t grp = 0; grp < groups.query->size(); ++grp) {
      const auto qi = (*groups.query)[grp];
      const auto b = (*groups.begin)[grp];
      const auto e = (*groups.end)[grp];
      const double* rs = raw->data() + (*offset)[grp];
      const double* ps = prob->data() + (*offset)[grp];
      const auto gy = g.row(static_cast<Eigen::Index>(grp));
      dalpha.assign(static_cast<std::size_t>(e - b), 0.0);
      double weighted = 0.0;
      for (auto j = b; j < e; ++j) {
        dalpha[j - b] = gy.dot(vv.row(j));
        weighted += ps[j - b] * dalpha[j - b];
        if (gv) {
          gv->row(j) += ps[j - b] * gy;
        }
      }
      if (!dq && !dk) {
        continue;
      }
      for (auto j = b; j < e; ++j) {
        const double dscore = ps[j - b] * (dalpha[j - b] - weighted) * (rs[j - b] > 0.0 ? 1.0 : slope);
        if (kind == ScoreKind::Dot) {
          if (gq) {
            gq->row(qi) += dscore * kv.row(j);
          }
          if (gk) {
            gk->row(j) += dscore * qv.row(qi);
          }
        } else {
          if (gq) {
            (*gq)(qi, 0) += dscore;
          }
          if (gk) {
            (*gk)(j, 0) += dscore;
          }
        }
      }
    }
  });
}

/// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets,
/// evaluated in the overflow-safe log-sum-exp form.
inline Var bce_with_logits_mean(Var logits, std::shared_ptr<const std::vector<double>> targets) {
  Tape& t = *logits.tape;
  const Matrix& z = t.value(logits);
  check(z.cols() == 1 && static_cast<std::size_t>(z.rows()) == targets->size(), "bce: logits/targets length mismatch");
  check(z.rows() > 0, "bce: no predictions");
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double x = z(i, 0);
    total += std::max(x, 0.0) - x * (*targets)[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const double n = static_cast<double>(z.rows());
  return t.record(Matrix::Constant(1, 1, total / n), {logits}, [logits, targets, n](Tape& t, const Matrix& g, const Matrix& y) {
    const Matrix& z = t.value(logits);
    Matrix d(z.rows(), 1);
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      d(i, 0) = g(0, 0) * (sigmoid(z(i, 0)) - (*targets)[i]) / n;
    }
    t.accumulate(logits, d);
  });
}

inline Var mse_mean(Var pred, std::shared_ptr<const std::vector<double>> targets) {
  Tape& t = *pred.tape;
  const Matrix& p = t.value(pred);
  check(p.cols() == 1 && static_cast<std::size_t>(p.rows()) == targets->size(), "mse: prediction/target length mismatch");
  check(p.rows() > 0, "mse: no predictions");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double r = p(i, 0) - (*targets)[i];
    total += r * r;
  }
  const double n = static_cast<double>(p.rows());
  return t.record(Matrix::Constant(1, 1, total / n), {pred}, [pred, targets, n](Tape& t, const Matrix& g, const Matrix& y) {
    const Matrix& p = t.value(pred);
    Matrix d(p.rows(), 1);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      d(i, 0) = g(0, 0) * 2.0 * (p(i, 0) - (*targets)[i]) / n;
    }
    t.accumulate(pred, d);
  });
}

inline Var sum_all(Var x) {
  Tape& t = *x.tape;
  Matrix y = Matrix::Constant(1, 1, t.value(x).sum());
  return t.record(std::move(y), {x}, [x](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(), g(0, 0)));
  });
}

}  // namespace ops
}  // namespace corgi
