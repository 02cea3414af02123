// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Arguments restrict the run to the named criteria (A1 ... A8).

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "corgi/baselines.hpp"
#include "corgi/report.hpp"
#include "corgi/runtime.hpp"
#include "corgi/synthetic.hpp"

using namespace corgi;

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kA1Accuracy = 0.95;
constexpr double kA1FullSeconds = 30 * 60;
constexpr double kA1HalfSeconds = 8 * 60;
constexpr double kA2Margin = 0.02;
constexpr double kA3MassFactor = 2.0;
constexpr double kA3Entropy = 0.9;
constexpr double kA4Tolerance = 1e-4;
constexpr double kA5AccuracyGap = 0.02;
constexpr double kA5Speedup = 2.0;
constexpr double kA6Tolerance = 1e-9;
constexpr double kA7Softmax = 1e-12;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void progress(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct Verdict {
  std::string id;
  bool pass = false;
  std::string detail;
};

/// Every bucket report produced during the run, for the partition law in A6.
std::vector<DegreeBucketReport> g_bucket_reports;

struct Dataset {
  SyntheticDataset raw;
  ContentGraph cg;
  DatasetSplit split;
};

Dataset make_dataset(std::size_t users, std::size_t items, std::size_t edges) {
  SyntheticConfig c;
  c.num_users = users;
  c.num_items = items;
  c.num_edges = edges;
  Dataset d{generate(c), {}, {}};
  d.cg = attach_content(d.raw.graph, d.raw.content);
  d.split = split_edges(d.cg.graph(), 0);
  return d;
}

Dataset& full_data() {
  static Dataset d = make_dataset(1000, 1000, 100000);
  return d;
}

Dataset& half_data() {
  static Dataset d = make_dataset(500, 500, 25000);
  return d;
}

struct Run {
  TrainResult result;
  double seconds = 0.0;
  double seconds_per_epoch = 0.0;
  double test_accuracy = 0.0;
};

/// Trains with the default model and training configuration; memoised per
/// (dataset, kind, seed, caching).
const Run& trained(Dataset& data, const std::string& tag, ModelKind kind, std::uint64_t seed, bool caching) {
  static std::map<std::string, Run> runs;
  const std::string key = tag + "/" + to_string(kind) + "/" + std::to_string(seed) + (caching ? "/cached" : "");
  if (auto it = runs.find(key); it != runs.end()) {
    return it->second;
  }
  progress("training " + key);
  ModelConfig m;
  m.kind = kind;
  TrainConfig t;
  t.seed = seed;
  t.caching = caching;
  const auto start = Clock::now();
  Run run{train(data.cg, m, t, data.split), 0.0, 0.0, 0.0};
  run.seconds = seconds_since(start);
  double epoch_seconds = 0.0;
  for (const auto& e : run.result.history.epochs) epoch_seconds += e.seconds;
  run.seconds_per_epoch = epoch_seconds / static_cast<double>(run.result.history.epochs.size());
  EdgeCACache* cache = run.result.cache ? &*run.result.cache : nullptr;
  const Evaluation ev = evaluate(data.cg, run.result.model, data.split, data.split.test, cache);
  g_bucket_reports.push_back(ev.buckets);
  run.test_accuracy = ev.metrics.accuracy;
  progress(key + ": " + std::to_string(run.result.history.epochs.size()) + " epochs, best " +
           std::to_string(run.result.history.best_epoch) + ", test accuracy " + fixed(run.test_accuracy) + ", " +
           fixed(run.seconds, 1) + " s");
  return runs.emplace(key, std::move(run)).first->second;
}

// A1 ------------------------------------------------------------------------

Verdict a1() {
  const Run& full = trained(full_data(), "full", ModelKind::Corgi, 0, false);
  const bool full_ok = full.test_accuracy >= kA1Accuracy && full.seconds <= kA1FullSeconds;
  std::string detail = "full 1000/1000/100000: test accuracy " + fixed(full.test_accuracy) + " in " +
                       fixed(full.seconds, 0) + " s (" + std::to_string(full.result.history.epochs.size()) +
                       " epochs)";
  if (full_ok) {
    return {"A1", true, detail};
  }
  const Run& half = trained(half_data(), "half", ModelKind::Corgi, 0, false);
  const bool half_ok = half.test_accuracy >= kA1Accuracy && half.seconds <= kA1HalfSeconds;
  detail += "; half 500/500/25000: test accuracy " + fixed(half.test_accuracy) + " in " + fixed(half.seconds, 0) +
            " s (" + std::to_string(half.result.history.epochs.size()) + " epochs); need >= " +
            fixed(kA1Accuracy, 2);
  return {"A1", half_ok, detail};
}

/// The scale A1 judged on: full if that run reached the bar, else half.
bool a1_full() { return trained(full_data(), "full", ModelKind::Corgi, 0, false).test_accuracy >= kA1Accuracy; }

// A2 ------------------------------------------------------------------------

Verdict a2() {
  const bool use_full = a1_full();
  Dataset& data = use_full ? full_data() : half_data();
  const char* tag = use_full ? "full" : "half";
  double corgi = 0.0;
  double init = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    corgi += trained(data, tag, ModelKind::Corgi, seed, false).test_accuracy / 3.0;
    init += trained(data, tag, ModelKind::GcnContentInit, seed, false).test_accuracy / 3.0;
  }
  return {"A2", corgi - init >= kA2Margin,
          std::string(tag) + "-scale, 3 seeds: corgi " + fixed(corgi) + " vs gcn-content-init " + fixed(init) + ", margin " +
              fixed(corgi - init) + " (need >= " + fixed(kA2Margin, 2) + ")"};
}

// A3 ------------------------------------------------------------------------

Verdict a3() {
  const bool use_full = a1_full();
  Dataset& data = use_full ? full_data() : half_data();
  const Run& run = trained(data, use_full ? "full" : "half", ModelKind::Corgi, 0, false);

  ForwardOptions opt;
  opt.record_attention = true;
  const LayerState s = forward(data.cg, run.result.model, Mode::Eval, data.split.train, {}, opt);
  const auto words = words_of_rows(data.cg);
  const int last = run.result.model.config.layers;
  std::string per_layer;
  AttentionSummary final_layer;
  for (int layer = 1; layer <= last; ++layer) {
    std::vector<AttentionRecord> recs;
    for (const auto& r : s.attention) {
      if (r.layer == layer && r.direction == 0) recs.push_back(r);
    }
    const AttentionSummary st = attention_stats(recs, data.raw.focus, words);
    per_layer += " layer" + std::to_string(layer) + " mass " + fixed(st.focus_mass) + " entropy " +
                 fixed(st.absent_entropy) + ";";
    if (layer == last) final_layer = st;
  }
  const double bar = kA3MassFactor / final_layer.mean_count;
  const bool ok = final_layer.focus_mass >= bar && final_layer.absent_entropy >= kA3Entropy;
  return {"A3", ok,
          std::string(use_full ? "full" : "half") + "-scale model, last layer: focus mass " +
              fixed(final_layer.focus_mass) + " (need >= 2/n = " + fixed(bar) + ", mean 1/n " +
              fixed(final_layer.uniform_share) + "), absent entropy " + fixed(final_layer.absent_entropy) +
              " (need >= " + fixed(kA3Entropy, 2) + ");" + per_layer};
}

// A4 ------------------------------------------------------------------------

ContentGraph a4_graph() {
  Rng rng(77);
  auto g = build_graph({{0, 0, 1}, {0, 1, 0}, {1, 1, 1}, {1, 2, 0}, {2, 0, 1}}, 3, 3, 2);
  ContentStore cs(4, 3);
  cs.set(0, standard_normal(3, 4, rng));
  cs.set(1, standard_normal(1, 4, rng));
  cs.set(2, standard_normal(2, 4, rng));
  return attach_content(std::move(g), cs);
}

Verdict a4() {
  const ContentGraph cg = a4_graph();
  const std::vector<EdgeId> visible{0, 1, 2, 4};
  const std::vector<EdgeId> query{0, 1, 2, 3, 4};
  const auto targets = edge_targets(cg.graph(), query);
  double worst = 0.0;
  std::string worst_at;
  int checks = 0;
  for (AttentionKind kind : {AttentionKind::DotProduct, AttentionKind::Concat}) {
    for (Combination comb : {Combination::Add, Combination::Concat}) {
      for (Mode mode : {Mode::Eval, Mode::Train}) {
        ModelConfig c;
        c.layers = 2;
        c.node_dim = 8;
        c.edge_dim = 8;
        c.readout_hidden = 8;
        c.attention = kind;
        c.combination = comb;
        const Model model = init_model(c, cg, 5);
        ForwardOptions opt;
        opt.mode = mode;
        opt.dropout_seed = 17;
        Tape tape;
        Pass pass = record_forward(tape, model, cg, visible, query, opt);
        const Gradients analytic = tape.backward(prediction_loss(*pass.logits, model.task, targets), model.params);
        auto f = [&](const ParamStore& p) {
          Model m = model;
          m.params = p;
          Tape t(false);
          Pass q = record_forward(t, m, cg, visible, query, opt);
          return t.value(prediction_loss(*q.logits, m.task, targets))(0, 0);
        };
        const auto report = compare_gradients(analytic, finite_difference_grad(f, model.params, 1e-5));
        for (const auto& [name, e] : report.relative_error) {
          ++checks;
          if (e > worst) {
            worst = e;
            worst_at = std::string(kind == AttentionKind::DotProduct ? "dp" : "co") + "/" +
                       (comb == Combination::Add ? "add" : "concat") + "/" + (mode == Mode::Eval ? "eval" : "train") +
                       " " + name;
          }
        }
      }
    }
  }
  return {"A4", worst <= kA4Tolerance,
          std::to_string(checks) + " parameter checks, worst relative error " + sci(worst) + " at " + worst_at +
              " (need <= " + sci(kA4Tolerance) + ")"};
}

// A5 ------------------------------------------------------------------------

Verdict a5() {
  const bool use_full = a1_full();
  Dataset& data = use_full ? full_data() : half_data();
  const char* tag = use_full ? "full" : "half";
  const Run& uncached = trained(data, tag, ModelKind::Corgi, 0, false);
  const Run& cached = trained(data, tag, ModelKind::Corgi, 0, true);
  const double gap = std::abs(cached.test_accuracy - uncached.test_accuracy);
  const double speedup = uncached.seconds_per_epoch / cached.seconds_per_epoch;
  return {"A5", gap <= kA5AccuracyGap && speedup >= kA5Speedup,
          std::string(tag) + "-scale L=3: test accuracy cached " + fixed(cached.test_accuracy) + " vs uncached " +
              fixed(uncached.test_accuracy) + " (gap " + fixed(gap) + ", need <= " + fixed(kA5AccuracyGap, 2) +
              "); seconds/epoch cached " + fixed(cached.seconds_per_epoch, 3) + " vs uncached " +
              fixed(uncached.seconds_per_epoch, 3) + " (speedup " + fixed(speedup, 2) + "x, need >= " +
              fixed(kA5Speedup, 1) + "x)"};
}

// A6 ------------------------------------------------------------------------

double brute_auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return wins / pairs;
}

double brute_aupr(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  const double positives = std::accumulate(y.begin(), y.end(), 0.0);
  double area = 0.0;
  double prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0;
    double predicted = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) {
        predicted += 1.0;
        tp += y[i];
      }
    }
    area += (tp / positives - prev_recall) * (tp / predicted);
    prev_recall = tp / positives;
  }
  return area;
}

Verdict a6() {
  Rng rng(606);
  std::uniform_int_distribution<int> size(2, 200);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const int n = size(rng);
    const bool coarse = k % 2 == 0;
    std::bernoulli_distribution pos(0.1 + 0.8 * u(rng));
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[i] = coarse ? std::round(u(rng) * 8.0) / 8.0 : u(rng);
      y[i] = pos(rng) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    worst = std::max({worst, std::abs(auroc(s, y) - brute_auroc(s, y)), std::abs(aupr(s, y) - brute_aupr(s, y))});
  }

  // Partition law on every bucket report of this run plus fresh random ones.
  std::size_t reports = 0;
  std::size_t broken = 0;
  std::uniform_int_distribution<std::size_t> deg(0, 40);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> s(100), t(100);
    std::vector<std::size_t> d(100);
    for (std::size_t i = 0; i < 100; ++i) {
      s[i] = u(rng);
      t[i] = u(rng) < 0.5 ? 1.0 : 0.0;
      d[i] = deg(rng);
    }
    g_bucket_reports.push_back(degree_bucket_eval(s, t, d, true, degree_buckets({5, 10, 20})));
  }
  for (const auto& r : g_bucket_reports) {
    ++reports;
    broken += partition_holds(r) ? 0 : 1;
  }
  return {"A6", worst <= kA6Tolerance && broken == 0,
          "200 cases, worst |metric - oracle| " + sci(worst) + " (need <= " + sci(kA6Tolerance) + "); partition law " +
              std::to_string(reports - broken) + "/" + std::to_string(reports) + " bucket reports"};
}

// A7 ------------------------------------------------------------------------

std::string history_text(const TrainHistory& h) {
  std::ostringstream out;
  for (const auto& e : h.epochs) {
    out << e.epoch << '\t' << fmt_double(e.train_loss) << '\t' << fmt_double(e.val_loss) << '\t'
        << fmt_double(e.val_metric) << '\n';
  }
  return out.str();
}

Verdict a7() {
  std::vector<std::string> failed;

  Rng rng(707);
  std::normal_distribution<double> normal(0.0, 10.0);
  double softmax_worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> v(1 + k % 64);
    for (double& x : v) x = normal(rng);
    const auto p = softmax(std::span<const double>(v));
    softmax_worst = std::max(softmax_worst, std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0));
  }
  if (softmax_worst > kA7Softmax) failed.push_back("softmax");

  // Aggregation order: shuffled messages and shuffled visible edges.
  bool order_ok = true;
  {
    const Matrix Q = standard_normal(8, 16, rng);
    const Vector h = standard_normal(8, 1, rng).col(0);
    std::vector<Vector> msgs;
    for (int i = 0; i < 30; ++i) msgs.push_back(standard_normal(8, 1, rng).col(0));
    const Vector ref = update_node(h, msgs, Q);
    const Dataset small = make_dataset(30, 30, 300);
    ModelConfig c;
    c.layers = 2;
    c.node_dim = 8;
    c.edge_dim = 8;
    c.readout_hidden = 8;
    const Model model = init_model(c, small.cg, 1);
    const LayerState base = forward(small.cg, model, Mode::Eval, small.split.train, small.split.test);
    std::vector<EdgeId> shuffled = small.split.train;
    for (int trial = 0; trial < 100; ++trial) {
      std::shuffle(msgs.begin(), msgs.end(), rng);
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      order_ok = order_ok && bit_equal(Matrix(update_node(h, msgs, Q)), Matrix(ref)) &&
                 bit_equal(forward(small.cg, model, Mode::Eval, shuffled, small.split.test).logits, base.logits);
    }
  }
  if (!order_ok) failed.push_back("permutation");

  // Label leakage: flipped test labels change nothing; flipped validation
  // labels leave the parameter trajectory unchanged.
  bool leak_ok = true;
  {
    const Dataset d = make_dataset(40, 40, 500);
    ModelConfig c;
    c.layers = 2;
    c.node_dim = 8;
    c.edge_dim = 8;
    c.readout_hidden = 16;
    TrainConfig t;
    t.max_epochs = 12;
    t.patience = 4;
    t.adam.lr = 0.01;
    auto flipped = [&](const std::vector<EdgeId>& ids) {
      auto edges = d.cg.graph().edges();
      for (EdgeId id : ids) edges[id].label = 1 - edges[id].label;
      return attach_content(build_graph(edges, 40, 40, 2), d.raw.content);
    };
    std::vector<ParamStore> base, val_poisoned;
    const TrainResult a = train(d.cg, c, t, d.split, [&](const EpochRecord&, const Model& m) { base.push_back(m.params); });
    const TrainResult b = train(flipped(d.split.test), c, t, d.split);
    leak_ok = bit_equal(a.model.params, b.model.params) && history_text(a.history) == history_text(b.history);
    TrainConfig fixed_length = t;
    fixed_length.patience = t.max_epochs;
    base.clear();
    train(d.cg, c, fixed_length, d.split, [&](const EpochRecord&, const Model& m) { base.push_back(m.params); });
    train(flipped(d.split.val), c, fixed_length, d.split,
          [&](const EpochRecord&, const Model& m) { val_poisoned.push_back(m.params); });
    leak_ok = leak_ok && base.size() == val_poisoned.size();
    for (std::size_t i = 0; leak_ok && i < base.size(); ++i) leak_ok = bit_equal(base[i], val_poisoned[i]);

    // Seed determinism of the whole history.
    const TrainResult again = train(d.cg, c, t, d.split);
    if (history_text(again.history) != history_text(a.history)) failed.push_back("determinism");

    // Checkpoint round trip.
    const auto path = (std::filesystem::temp_directory_path() / "corgi_acceptance.ckpt").string();
    Model back = init_model(c, d.cg, 99);
    save_checkpoint(path, a.model.params);
    load_checkpoint(path, back.params);
    if (!bit_equal(back.params, a.model.params)) failed.push_back("checkpoint");
  }
  if (!leak_ok) failed.push_back("label-leakage");

  std::string detail = "softmax max |sum-1| " + sci(softmax_worst) + "; 100 shuffles; label poisoning; " +
                       "checkpoint round trip; seed determinism";
  if (!failed.empty()) {
    detail += "; failed:";
    for (const auto& f : failed) detail += " " + f;
  }
  return {"A7", failed.empty(), detail};
}

// A8 ------------------------------------------------------------------------

Verdict a8() {
  const Dataset d = make_dataset(30, 30, 300);
  const ContentGraph empty = attach_content(d.raw.graph, ContentStore(5, 5));
  bool ok = true;
  int compared = 0;
  for (AttentionKind kind : {AttentionKind::DotProduct, AttentionKind::Concat}) {
    ModelConfig c;
    c.layers = 3;
    c.node_dim = 16;
    c.edge_dim = 16;
    c.readout_hidden = 16;
    c.attention = kind;
    c.bidirectional_ca = false;
    const Model corgi = init_model(c, empty, 3);
    ModelConfig g = c;
    g.kind = ModelKind::GcnGrape;
    Model grape = init_model(g, empty, 4);
    copy_shared_params(corgi, grape);
    ForwardOptions opt;
    opt.final_edges = true;
    const LayerState a = forward(empty, corgi, Mode::Eval, d.split.train, d.split.test, opt);
    const LayerState b = gcn_grape_forward(empty, grape, Mode::Eval, d.split.train, d.split.test);
    for (std::size_t l = 0; l < a.h.size(); ++l) ok = ok && bit_equal(a.h[l], b.h[l]);
    ok = ok && bit_equal(a.logits, b.logits);
    ++compared;
  }
  return {"A8", ok,
          std::to_string(compared) + " attention kinds, L=3, empty content store: node states and predictions " +
              (ok ? "bit-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  apply_thread_limit();
  const std::vector<std::pair<std::string, Verdict (*)()>> all{{"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4},
                                                               {"A5", a5}, {"A6", a6}, {"A7", a7}, {"A8", a8}};
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  // A6 runs last so its partition check sees every evaluation of the run.
  std::vector<std::pair<std::string, Verdict (*)()>> order;
  for (const auto& c : all) if (c.first != "A6") order.push_back(c);
  order.push_back(all[5]);
  std::map<std::string, Verdict> verdicts;
  for (const auto& [id, fn] : order) {
    if (!wanted.empty() && !wanted.contains(id)) continue;
    try {
      verdicts[id] = fn();
    } catch (const std::exception& e) {
      verdicts[id] = {id, false, std::string("error: ") + e.what()};
    }
  }
  for (const auto& [id, v] : verdicts) {
    std::cout << id << ' ' << (v.pass ? "PASS" : "FAIL") << ' ' << v.detail << std::endl;
    failures += v.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
