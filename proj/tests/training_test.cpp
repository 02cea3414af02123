#include <gtest/gtest.h>

#include <cmath>

#include "corgi/io.hpp"
#include "corgi/synthetic.hpp"
#include "corgi/training.hpp"

using namespace corgi;

namespace {

std::string data_path(const char* name) { return std::string(CORGI_TEST_DATA) + "/" + name; }

ContentGraph synthetic_graph(std::uint64_t seed, std::size_t users = 30, std::size_t items = 30,
                             std::size_t edges = 300) {
  SyntheticConfig c;
  c.num_users = users;
  c.num_items = items;
  c.num_edges = edges;
  c.seed = seed;
  auto ds = generate(c);
  return attach_content(std::move(ds.graph), ds.content);
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.layers = 2;
  m.node_dim = 8;
  m.edge_dim = 8;
  m.readout_hidden = 16;
  return m;
}

TrainConfig quick(int epochs) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.patience = 1000;
  t.adam.lr = 0.01;
  return t;
}

ContentGraph with_labels_flipped(const ContentGraph& cg, const std::vector<EdgeId>& ids) {
  auto edges = cg.graph().edges();
  for (EdgeId id : ids) edges[id].label = 1 - edges[id].label;
  ContentStore cs(cg.stacked().cols(), 64);
  for (std::size_t m = 0; m < cg.graph().num_items(); ++m) {
    if (cg.has_content(m)) cs.set(m, cg.content(m));
  }
  return attach_content(build_graph(std::move(edges), cg.graph().num_users(), cg.graph().num_items(), 2), cs);
}

bool same_history(const TrainHistory& a, const TrainHistory& b) {
  if (a.epochs.size() != b.epochs.size() || a.best_epoch != b.best_epoch) return false;
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    if (a.epochs[i].train_loss != b.epochs[i].train_loss || a.epochs[i].val_loss != b.epochs[i].val_loss ||
        a.epochs[i].val_metric != b.epochs[i].val_metric) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST(Loss, MatchesHandValues) {
  const double bce = -(std::log(0.8) + std::log(1.0 - 0.4)) / 2.0;
  EXPECT_DOUBLE_EQ(loss({0.8, 0.4}, {1.0, 0.0}, LossKind::BCE), bce);
  EXPECT_DOUBLE_EQ(loss({1.0, 3.5}, {2.0, 3.0}, LossKind::MSE), 0.625);
  EXPECT_THROW(loss({1.0}, {1.0}, LossKind::BCE), Error);
  EXPECT_THROW(loss({0.5}, {1.0, 0.0}, LossKind::MSE), Error);
  EXPECT_THROW(loss({}, {}, LossKind::MSE), Error);
}

TEST(Loss, LogitPathAgreesWithProbabilityPath) {
  const auto cg = synthetic_graph(1);
  const auto split = split_edges(cg.graph(), 1);
  const Model model = init_model(tiny_model(), cg, 3);
  const auto probs = predict(cg, model, split.train, split.val);
  const auto targets = edge_targets(cg.graph(), split.val);
  const Validation v = validate(cg, model, split.train, split.val, nullptr);
  EXPECT_NEAR(v.loss, loss(probs, targets, LossKind::BCE), 1e-12);
}

TEST(Training, ZeroLearningRateKeepsValidationLossFixed) {
  const auto cg = synthetic_graph(2);
  const auto split = split_edges(cg.graph(), 2);
  TrainConfig t = quick(6);
  t.adam.lr = 0.0;
  const auto r = train(cg, tiny_model(), t, split);
  ASSERT_EQ(r.history.epochs.size(), 6u);
  for (const auto& e : r.history.epochs) {
    EXPECT_EQ(e.val_loss, r.history.epochs[0].val_loss);
  }
  EXPECT_TRUE(bit_equal(r.model.params, init_model(tiny_model(), cg, t.seed).params));
}

TEST(Training, EarlyStoppingLaw) {
  for (int patience : {1, 2, 3}) {
    const auto cg = synthetic_graph(3);
    const auto split = split_edges(cg.graph(), 3);
    TrainConfig t = quick(200);
    t.adam.lr = 0.05;
    t.patience = patience;
    const auto r = train(cg, tiny_model(), t, split);
    const auto& h = r.history;
    ASSERT_EQ(static_cast<int>(h.epochs.size()), h.stopped_epoch);
    double best = h.epochs[0].val_loss;
    int best_epoch = 1;
    int stale = 0;
    int stop = 0;
    for (const auto& e : h.epochs) {
      if (e.val_loss < best || e.epoch == 1) {
        best = e.val_loss;
        best_epoch = e.epoch;
        stale = 0;
      } else if (++stale >= patience) {
        stop = e.epoch;
        break;
      }
    }
    EXPECT_EQ(h.best_epoch, best_epoch);
    if (h.stopped_epoch < t.max_epochs) {
      EXPECT_EQ(h.stopped_epoch, stop);
      EXPECT_EQ(h.stopped_epoch - h.best_epoch, patience);
    }
  }
}

TEST(Training, ReturnsBestEpochParameters) {
  const auto cg = synthetic_graph(4);
  const auto split = split_edges(cg.graph(), 4);
  TrainConfig t = quick(30);
  t.adam.lr = 0.05;
  t.patience = 3;
  std::vector<ParamStore> seen;
  const auto r = train(cg, tiny_model(), t, split, [&](const EpochRecord&, const Model& m) { seen.push_back(m.params); });
  ASSERT_GE(r.history.best_epoch, 1);
  EXPECT_TRUE(bit_equal(r.model.params, seen[static_cast<std::size_t>(r.history.best_epoch - 1)]));
  const Validation v = validate(cg, r.model, split.train, split.val, nullptr);
  EXPECT_EQ(v.loss, r.history.epochs[static_cast<std::size_t>(r.history.best_epoch - 1)].val_loss);
}

TEST(Training, Deterministic) {
  const auto cg = synthetic_graph(5);
  const auto split = split_edges(cg.graph(), 5);
  ModelConfig m = tiny_model();
  m.dropout.edge = 0.3;
  m.dropout.message = 0.1;
  m.dropout.mlp = 0.1;
  const auto a = train(cg, m, quick(8), split);
  const auto b = train(cg, m, quick(8), split);
  EXPECT_TRUE(same_history(a.history, b.history));
  EXPECT_TRUE(bit_equal(a.model.params, b.model.params));
  TrainConfig other = quick(8);
  other.seed = 1;
  EXPECT_FALSE(bit_equal(train(cg, m, other, split).model.params, a.model.params));
}

TEST(Training, TestLabelsNeverInfluenceTraining) {
  const auto cg = synthetic_graph(6);
  const auto split = split_edges(cg.graph(), 6);
  const auto poisoned = with_labels_flipped(cg, split.test);
  TrainConfig t = quick(10);
  t.patience = 3;
  const auto a = train(cg, tiny_model(), t, split);
  const auto b = train(poisoned, tiny_model(), t, split);
  EXPECT_TRUE(same_history(a.history, b.history));
  EXPECT_TRUE(bit_equal(a.model.params, b.model.params));
}

TEST(Training, ValidationLabelsOnlySelectTheEpoch) {
  const auto cg = synthetic_graph(7);
  const auto split = split_edges(cg.graph(), 7);
  const auto poisoned = with_labels_flipped(cg, split.val);
  std::vector<ParamStore> ta, tb;
  train(cg, tiny_model(), quick(10), split, [&](const EpochRecord&, const Model& m) { ta.push_back(m.params); });
  train(poisoned, tiny_model(), quick(10), split, [&](const EpochRecord&, const Model& m) { tb.push_back(m.params); });
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_TRUE(bit_equal(ta[i], tb[i])) << "epoch " << i + 1;
  }
}

TEST(Training, TrainLossMostlyDecreasesAtDefaults) {
  const auto cg = synthetic_graph(0, 200, 200, 4000);
  const auto split = split_edges(cg.graph(), 0);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    TrainConfig t;
    t.max_epochs = 6;
    t.seed = seed;
    const auto r = train(cg, ModelConfig{}, t, split);
    ASSERT_EQ(r.history.epochs.size(), 6u);
    int down = 0;
    for (std::size_t i = 1; i < r.history.epochs.size(); ++i) {
      down += r.history.epochs[i].train_loss <= r.history.epochs[i - 1].train_loss ? 1 : 0;
    }
    EXPECT_GE(down, 4) << "seed " << seed;
  }
}

TEST(Training, FiveItemFixtureRunsEveryKind) {
  const auto edges = read_edges(data_path("five_items.edges"));
  const auto cg = attach_content(build_graph(edges, 4, 5, 2), read_content(data_path("five_items.content")));
  const auto split = split_edges(cg.graph(), 0);
  for (ModelKind kind :
       {ModelKind::Corgi, ModelKind::GcnContentInit, ModelKind::GcnGrape, ModelKind::GcnLabelEdges}) {
    ModelConfig m = tiny_model();
    m.kind = kind;
    TrainConfig t = quick(5);
    t.caching = true;
    const auto r = train(cg, m, t, split);
    EXPECT_EQ(r.history.stopped_epoch, 5);
    EXPECT_EQ(r.cache.has_value(), kind == ModelKind::Corgi);
    const auto ev = evaluate(cg, r.model, split, split.test, r.cache ? const_cast<EdgeCACache*>(&*r.cache) : nullptr);
    EXPECT_EQ(ev.scores.size(), split.test.size());
    for (double s : ev.scores) {
      EXPECT_GT(s, 0.0);
      EXPECT_LT(s, 1.0);
    }
  }
}

TEST(Training, OrdinalTaskReportsRmse) {
  std::vector<LabeledEdge> edges;
  for (int u = 0; u < 8; ++u) {
    for (int m = 0; m < 6; ++m) edges.push_back({u, m, (u * m) % 5});
  }
  const auto cg = attach_content(build_graph(edges, 8, 6, 5), ContentStore(3, 2));
  const auto split = split_edges(cg.graph(), 1);
  const auto r = train(cg, tiny_model(), quick(4), split);
  const auto ev = evaluate(cg, r.model, split, split.test);
  EXPECT_FALSE(ev.metrics.binary);
  EXPECT_GT(ev.metrics.rmse, 0.0);
  const auto& best = r.history.epochs[static_cast<std::size_t>(r.history.best_epoch - 1)];
  EXPECT_NEAR(best.val_metric, rmse(predict(cg, r.model, split.train, split.val), edge_targets(cg.graph(), split.val)),
              1e-12);
}

TEST(Evaluation, BucketsPartitionTheTestEdges) {
  const auto cg = synthetic_graph(8, 40, 40, 600);
  const auto split = split_edges(cg.graph(), 8);
  const Model model = init_model(tiny_model(), cg, 0);
  const auto ev = evaluate(cg, model, split, split.test, nullptr, degree_buckets({10, 12}));
  ASSERT_EQ(ev.buckets.buckets.size(), 4u);
  EXPECT_TRUE(partition_holds(ev.buckets));
  EXPECT_EQ(ev.buckets.buckets[0].count, split.test.size());
  EXPECT_EQ(ev.buckets.buckets[0].metrics->accuracy, ev.metrics.accuracy);
}

TEST(Training, RejectsBadConfigAndEmptyParts) {
  const auto cg = synthetic_graph(9);
  auto split = split_edges(cg.graph(), 9);
  TrainConfig t = quick(2);
  t.patience = 0;
  EXPECT_THROW(train(cg, tiny_model(), t, split), Error);
  split.val.clear();
  EXPECT_THROW(train(cg, tiny_model(), quick(2), split), Error);
}
