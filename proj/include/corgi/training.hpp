#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "corgi/cache.hpp"
#include "corgi/metrics.hpp"
#include "corgi/model.hpp"
#include "corgi/params.hpp"

namespace corgi {

enum class LossKind { BCE, MSE };

/// Mean-reduced loss on predictions (probabilities for BCE).
inline double loss(const std::vector<double>& pred, const std::vector<double>& labels, LossKind kind) {
  if (pred.size() != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "loss: " + std::to_string(pred.size()) + " predictions vs " +
                                              std::to_string(labels.size()) + " labels");
  }
  if (pred.empty()) {
    throw Error(ErrorCode::EmptyInput, "loss of an empty sample");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (kind == LossKind::BCE) {
      if (!(pred[i] > 0.0 && pred[i] < 1.0)) {
        throw Error(ErrorCode::DomainError, "BCE prediction " + std::to_string(pred[i]) + " outside (0, 1)");
      }
      total -= labels[i] * std::log(pred[i]) + (1.0 - labels[i]) * std::log1p(-pred[i]);
    } else {
      total += (pred[i] - labels[i]) * (pred[i] - labels[i]);
    }
  }
  return total / static_cast<double>(pred.size());
}

struct TrainConfig {
  AdamHyper adam;
  int max_epochs = 500;
  int patience = 10;
  std::uint64_t seed = 0;
  bool caching = false;
  /// Items per sampled subgraph; unset trains on the whole graph.
  std::optional<std::size_t> sample_items;

  void validate() const {
    if (!(adam.lr >= 0.0)) throw Error(ErrorCode::InvalidConfig, "train.lr must be non-negative");
    if (max_epochs < 1) throw Error(ErrorCode::InvalidConfig, "train.max_epochs must be >= 1");
    if (patience < 1) throw Error(ErrorCode::InvalidConfig, "train.patience must be >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  /// Accuracy for binary tasks, RMSE for ordinal ones.
  double val_metric = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  int stopped_epoch = 0;
};

struct TrainResult {
  Model model;  // parameters of the best validation epoch
  TrainHistory history;
  std::optional<EdgeCACache> cache;  // cache as of the best epoch
};

/// Observer called after every epoch's optimiser step.
using EpochHook = std::function<void(const EpochRecord&, const Model&)>;

inline std::vector<double> edge_targets(const BipartiteGraph& g, const std::vector<EdgeId>& edges) {
  std::vector<double> out(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    out[i] = static_cast<double>(g.edge(edges[i]).label);
  }
  return out;
}

/// Loss of the readout output on `edges`: BCE on logits for binary tasks,
/// MSE on the raw score otherwise.
inline Var prediction_loss(Var logits, Task task, const std::vector<double>& targets) {
  auto t = std::make_shared<const std::vector<double>>(targets);
  return task == Task::Binary ? ops::bce_with_logits_mean(logits, t) : ops::mse_mean(logits, t);
}

struct Validation {
  double loss = 0.0;
  double metric = 0.0;
};

inline Validation validate(const ContentGraph& cg, const Model& model, const std::vector<EdgeId>& visible,
                           const std::vector<EdgeId>& part, EdgeCACache* cache) {
  ForwardOptions opt;
  opt.cache = cache;
  Tape tape(false);
  Pass pass = record_forward(tape, model, cg, visible, part, opt);
  const std::vector<double> targets = edge_targets(cg.graph(), part);
  Validation v;
  v.loss = tape.value(prediction_loss(*pass.logits, model.task, targets))(0, 0);
  const Matrix& z = tape.value(*pass.logits);
  std::vector<double> scores(part.size());
  for (std::size_t i = 0; i < part.size(); ++i) {
    scores[i] = model.task == Task::Binary ? sigmoid(z(static_cast<Eigen::Index>(i), 0)) : z(static_cast<Eigen::Index>(i), 0);
  }
  if (model.task == Task::Binary) {
    std::vector<int> y(targets.begin(), targets.end());
    v.metric = accuracy(scores, y);
  } else {
    v.metric = rmse(scores, targets);
  }
  return v;
}

/// Full-batch training with Adam and early stopping on validation loss.
/// Each epoch: resample edge dropout, forward over the kept train edges,
/// loss on every train edge (or, with sampling, on the train edges of the
/// sampled subgraph), one optimiser step, then an eval-mode validation pass
/// with all train edges visible.
inline TrainResult train(const ContentGraph& cg, const ModelConfig& model_config, const TrainConfig& cfg,
                         const DatasetSplit& split, const EpochHook& hook = {}) {
  cfg.validate();
  if (split.train.empty() || split.val.empty()) {
    throw Error(ErrorCode::EmptyInput, "training needs non-empty train and validation parts");
  }
  const BipartiteGraph& g = cg.graph();
  Model model = init_model(model_config, cg, cfg.seed);
  AdamState adam = AdamState::for_params(model.params, cfg.adam);
  std::optional<EdgeCACache> cache;
  if (cfg.caching && model_config.uses_content_attention()) {
    cache.emplace(g.num_edges(), model_config.edge_dim);
  }

  TrainResult result{model, {}, cache};
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch));

    std::vector<EdgeId> visible;
    visible.reserve(split.train.size());
    {
      Rng rng(mix_seed(epoch_seed, 1));
      std::bernoulli_distribution keep(1.0 - model_config.dropout.edge);
      for (EdgeId id : split.train) {
        if (keep(rng)) {
          visible.push_back(id);
        }
      }
    }
    std::vector<EdgeId> query = split.train;
    if (cfg.sample_items) {
      const auto sample = sample_subgraph(g, std::min(*cfg.sample_items, g.num_items()), mix_seed(epoch_seed, 2));
      visible = restrict_to_sample(g, visible, sample);
      query = restrict_to_sample(g, query, sample);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    if (!query.empty()) {
      ForwardOptions opt;
      opt.mode = Mode::Train;
      opt.dropout_seed = mix_seed(epoch_seed, 3);
      opt.cache = cache ? &*cache : nullptr;
      opt.write_cache = true;
      opt.epoch = epoch;
      Tape tape;
      Pass pass = record_forward(tape, model, cg, visible, query, opt);
      Var objective = prediction_loss(*pass.logits, model.task, edge_targets(g, query));
      rec.train_loss = tape.value(objective)(0, 0);
      const Gradients grads = tape.backward(objective, model.params);
      adam_step(model.params, grads, adam);
    }

    const Validation val = validate(cg, model, split.train, split.val, cache ? &*cache : nullptr);
    rec.val_loss = val.loss;
    rec.val_metric = val.metric;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.epochs.push_back(rec);
    result.history.stopped_epoch = epoch;
    if (hook) {
      hook(rec, model);
    }
    if (val.loss < best) {
      best = val.loss;
      since_best = 0;
      result.model = model;
      result.cache = cache;
      result.history.best_epoch = epoch;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

/// Number of train edges per user.
inline std::vector<std::size_t> train_degrees(const BipartiteGraph& g, const std::vector<EdgeId>& train) {
  std::vector<std::size_t> deg(g.num_users(), 0);
  for (EdgeId id : train) {
    ++deg[static_cast<std::size_t>(g.edge(id).user)];
  }
  return deg;
}

struct Evaluation {
  MetricBundle metrics;
  std::vector<double> scores;
  std::vector<double> targets;
  DegreeBucketReport buckets;
};

/// Eval-mode scores on `part` with every train edge visible, plus
/// degree-bucketed metrics (user degree counted on train edges).
inline Evaluation evaluate(const ContentGraph& cg, const Model& model, const DatasetSplit& split,
                           const std::vector<EdgeId>& part, EdgeCACache* cache = nullptr,
                           const std::vector<DegreeBucket>& buckets = degree_buckets()) {
  const BipartiteGraph& g = cg.graph();
  Evaluation ev;
  ev.scores = predict(cg, model, split.train, part, cache);
  ev.targets = edge_targets(g, part);
  const bool binary = model.task == Task::Binary;
  if (binary) {
    std::vector<int> y(ev.targets.begin(), ev.targets.end());
    ev.metrics = binary_metrics(ev.scores, y);
  } else {
    ev.metrics = ordinal_metrics(ev.scores, ev.targets);
  }
  const auto deg = train_degrees(g, split.train);
  std::vector<std::size_t> edge_deg(part.size());
  for (std::size_t i = 0; i < part.size(); ++i) {
    edge_deg[i] = deg[static_cast<std::size_t>(g.edge(part[i]).user)];
  }
  ev.buckets = degree_bucket_eval(ev.scores, ev.targets, edge_deg, binary, buckets);
  return ev;
}

}  // namespace corgi
