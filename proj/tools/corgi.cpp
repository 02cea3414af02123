#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "corgi/config.hpp"
#include "corgi/io.hpp"
#include "corgi/report.hpp"
#include "corgi/runtime.hpp"

namespace fs = std::filesystem;
using namespace corgi;

namespace {

struct Overrides {
  std::string config;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string run;
  std::string bucket_edges;
  bool no_cache = false;
};

ExperimentConfig resolve_config(const Overrides& o, bool config_required) {
  ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = load_config(o.config);
  } else if (config_required) {
    throw Error(ErrorCode::MissingRequired, "--config is required");
  } else {
    cfg.data.source = DataSource::Synthetic;
  }
  if (!o.model.empty()) cfg.model.kind = parse_model_kind(o.model);
  if (o.seed) cfg.train.seed = *o.seed;
  if (!o.out.empty()) cfg.output.dir = o.out;
  if (!o.bucket_edges.empty()) cfg.output.bucket_edges = parse_bucket_edges(o.bucket_edges);
  if (o.no_cache) cfg.train.caching = false;
  return cfg;
}

/// Data paths are made absolute so the snapshot is usable from anywhere.
void write_snapshot(const fs::path& dir, ExperimentConfig cfg) {
  for (std::string* p : {&cfg.data.edges, &cfg.data.content, &cfg.data.focus}) {
    if (!p->empty()) *p = fs::absolute(*p).lexically_normal().string();
  }
  cfg.output.dir = fs::absolute(dir).lexically_normal().string();
  std::ofstream out(dir / "config.txt");
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "config.txt").string());
  out << format_config(cfg);
}

std::vector<std::string> evaluation_rows(const ContentGraph& cg, const Model& model, const DatasetSplit& split,
                                         EdgeCACache* cache, const std::vector<std::size_t>& cuts) {
  const auto buckets = degree_buckets(cuts);
  const bool binary = model.task == Task::Binary;
  auto rows = metric_rows("val", evaluate(cg, model, split, split.val, cache, buckets).buckets, binary);
  for (auto& r : metric_rows("test", evaluate(cg, model, split, split.test, cache, buckets).buckets, binary)) {
    rows.push_back(std::move(r));
  }
  return rows;
}

double test_metric(const ContentGraph& cg, const Model& model, const DatasetSplit& split, EdgeCACache* cache) {
  const auto ev = evaluate(cg, model, split, split.test, cache);
  return model.task == Task::Binary ? ev.metrics.accuracy : ev.metrics.rmse;
}

int cmd_gen_synthetic(const Overrides& o) {
  ExperimentConfig cfg = resolve_config(o, false);
  if (o.seed) cfg.synthetic.seed = *o.seed;
  const fs::path dir = cfg.output.dir;
  fs::create_directories(dir);
  const SyntheticDataset ds = generate(cfg.synthetic);
  write_edges((dir / "edges.tsv").string(), ds.graph);
  write_content((dir / "content.tsv").string(), ds.content);
  write_focus((dir / "focus.tsv").string(), ds.focus);

  std::ofstream out(dir / "data.cfg");
  out << "# synthetic: " << cfg.synthetic.num_users << " users, " << cfg.synthetic.num_items << " items, "
      << cfg.synthetic.num_edges << " edges, vocab " << cfg.synthetic.vocab_size << ", seed " << cfg.synthetic.seed
      << "\ndata.source = file\ndata.edges = edges.tsv\ndata.content = content.tsv\ndata.focus = focus.tsv\n"
      << "data.num_users = " << cfg.synthetic.num_users << "\ndata.num_items = " << cfg.synthetic.num_items
      << "\ndata.label_count = 2\n";
  std::cout << "wrote " << ds.graph.num_edges() << " edges to " << dir.string() << '\n';
  return 0;
}

int cmd_train(const Overrides& o) {
  const ExperimentConfig cfg = resolve_config(o, true);
  const fs::path dir = cfg.output.dir;
  fs::create_directories(dir);
  write_snapshot(dir, cfg);
  const LoadedData data = load_data(cfg);
  const DatasetSplit split = split_edges(data.graph.graph(), cfg.split_seed);

  TrainResult r = train(data.graph, cfg.model, cfg.train, split, [](const EpochRecord& e, const Model&) {
    std::cerr << "epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss " << e.val_loss
              << " val_metric " << e.val_metric << '\n';
  });
  save_checkpoint((dir / "model.ckpt").string(), r.model.params,
                  r.cache ? r.cache->records() : std::vector<std::pair<std::string, Matrix>>{});
  write_history((dir / "history.tsv").string(), r.history);
  EdgeCACache* cache = r.cache ? &*r.cache : nullptr;
  write_metrics((dir / "metrics.tsv").string(),
                evaluation_rows(data.graph, r.model, split, cache, cfg.output.bucket_edges));
  std::cout << "best_epoch\t" << r.history.best_epoch << "\ntest_"
            << (r.model.task == Task::Binary ? "accuracy\t" : "rmse\t")
            << fmt_double(test_metric(data.graph, r.model, split, cache)) << '\n';
  return 0;
}

struct LoadedRun {
  ExperimentConfig cfg;
  LoadedData data;
  DatasetSplit split;
  Model model;
  std::optional<EdgeCACache> cache;
};

LoadedRun load_run(const Overrides& o) {
  if (o.run.empty()) throw Error(ErrorCode::MissingRequired, "--run <dir> is required");
  const fs::path dir = o.run;
  LoadedRun run{load_config((dir / "config.txt").string()), {}, {}, {}, {}};
  if (!o.bucket_edges.empty()) run.cfg.output.bucket_edges = parse_bucket_edges(o.bucket_edges);
  run.data = load_data(run.cfg);
  run.split = split_edges(run.data.graph.graph(), run.cfg.split_seed);
  run.model = init_model(run.cfg.model, run.data.graph, run.cfg.train.seed);
  const std::string ckpt = (dir / "model.ckpt").string();
  load_checkpoint(ckpt, run.model.params);
  if (run.cfg.train.caching && run.cfg.model.uses_content_attention()) {
    run.cache.emplace(run.data.graph.graph().num_edges(), run.cfg.model.edge_dim);
    run.cache->load_records(read_checkpoint_records(ckpt));
  }
  return run;
}

int cmd_evaluate(const Overrides& o) {
  LoadedRun run = load_run(o);
  const auto rows = evaluation_rows(run.data.graph, run.model, run.split, run.cache ? &*run.cache : nullptr,
                                    run.cfg.output.bucket_edges);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_metrics((fs::path(o.out) / "metrics.tsv").string(), rows);
  }
  std::cout << "metric\tsplit\tbucket\tvalue\tn\n";
  for (const auto& r : rows) std::cout << r << '\n';
  return 0;
}

int cmd_export_attention(const Overrides& o) {
  LoadedRun run = load_run(o);
  if (!run.cfg.model.uses_content_attention()) {
    throw Error(ErrorCode::InvalidConfig, "model kind " + to_string(run.cfg.model.kind) + " has no content attention");
  }
  ForwardOptions opt;
  opt.cache = run.cache ? &*run.cache : nullptr;
  opt.record_attention = true;
  const LayerState s = forward(run.data.graph, run.model, Mode::Eval, run.split.train, {}, opt);
  const fs::path dir = o.out.empty() ? fs::path(o.run) : fs::path(o.out);
  fs::create_directories(dir);
  write_attention((dir / "attention.tsv").string(), s.attention);
  std::cout << "records\t" << s.attention.size() << '\n';

  if (!run.data.focus.empty()) {
    std::vector<AttentionRecord> last;
    for (const auto& r : s.attention) {
      if (r.layer == run.cfg.model.layers && r.direction == 0) last.push_back(r);
    }
    const auto st = attention_stats(last, run.data.focus, words_of_rows(run.data.graph));
    std::cout << "focus_mass\t" << fmt_double(st.focus_mass) << "\nuniform_share\t" << fmt_double(st.uniform_share)
              << "\npresent_edges\t" << st.present_edges << "\nabsent_entropy\t" << fmt_double(st.absent_entropy)
              << "\nabsent_edges\t" << st.absent_edges << '\n';
  }
  return 0;
}

int cmd_bench_cache(const Overrides& o) {
  ExperimentConfig cfg = resolve_config(o, true);
  const fs::path dir = cfg.output.dir;
  fs::create_directories(dir);
  const LoadedData data = load_data(cfg);
  const DatasetSplit split = split_edges(data.graph.graph(), cfg.split_seed);
  auto out = std::ofstream(dir / "bench.tsv");
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "bench.tsv").string());
  const std::string header = "mode\tepochs\tseconds_per_epoch\ttest_metric\n";
  out << header;
  std::cout << header;
  for (bool cached : {true, false}) {
    TrainConfig t = cfg.train;
    t.caching = cached;
    TrainResult r = train(data.graph, cfg.model, t, split);
    double seconds = 0.0;
    for (const auto& e : r.history.epochs) seconds += e.seconds;
    const std::string row = std::string(cached ? "cached" : "uncached") + '\t' +
                            std::to_string(r.history.epochs.size()) + '\t' +
                            fmt_double(seconds / static_cast<double>(r.history.epochs.size())) + '\t' +
                            fmt_double(test_metric(data.graph, r.model, split, r.cache ? &*r.cache : nullptr)) + '\n';
    out << row;
    std::cout << row;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Content-attentive GNN for edge-value imputation on user-item graphs"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config file");
    sub->add_option("--model", o.model, "corgi, gcn-content-init, gcn-grape or gcn-label-edges");
    sub->add_option("--seed", o.seed, "Seed override");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--bucket-edges", o.bucket_edges, "Degree cut points, comma separated");
    sub->add_flag("--no-cache", o.no_cache, "Disable content-attention caching");
  };
  auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic dataset (edges, content, focus words)");
  add_common(gen);
  auto* tr = app.add_subcommand("train", "Train a model and write a run directory");
  add_common(tr);
  auto* ev = app.add_subcommand("evaluate", "Recompute metrics from a run directory");
  add_common(ev);
  ev->add_option("--run", o.run, "Run directory written by train")->required();
  auto* ex = app.add_subcommand("export-attention", "Write attention.tsv for a trained run");
  add_common(ex);
  ex->add_option("--run", o.run, "Run directory written by train")->required();
  auto* bench = app.add_subcommand("bench-cache", "Time training with and without the cache");
  add_common(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    tune_allocator();
    apply_thread_limit();
    if (*gen) return cmd_gen_synthetic(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_evaluate(o);
    if (*ex) return cmd_export_attention(o);
    if (*bench) return cmd_bench_cache(o);
  } catch (const Error& e) {
    std::cerr << "corgi: error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "corgi: error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
