#pragma once

// Flat `section.key = value` experiment configuration.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "corgi/error.hpp"
#include "corgi/graph.hpp"
#include "corgi/io.hpp"
#include "corgi/layers.hpp"
#include "corgi/synthetic.hpp"
#include "corgi/training.hpp"

namespace corgi {

enum class DataSource { File, Synthetic };

struct DataConfig {
  DataSource source = DataSource::File;
  std::string edges;
  std::string content;
  std::string focus;
  std::optional<std::size_t> num_users;
  std::optional<std::size_t> num_items;
  std::optional<int> label_count;
  int label_offset = 0;
};

struct OutputConfig {
  std::string dir = "run";
  std::vector<std::size_t> bucket_edges{10};
};

struct ExperimentConfig {
  DataConfig data;
  SyntheticConfig synthetic;
  ModelConfig model;
  TrainConfig train;
  std::uint64_t split_seed = 0;
  OutputConfig output;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) {
    return "";
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

struct ValueError {
  std::string what;
};

template <typename T>
T parse_number(const std::string& s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw ValueError{"'" + s + "' is not a valid number"};
  }
  return v;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ValueError{"'" + s + "' is not a boolean"};
}

inline std::vector<std::size_t> parse_cuts(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    if (!part.empty()) {
      out.push_back(parse_number<std::size_t>(part));
    }
  }
  return out;
}

inline std::string join_cuts(const std::vector<std::size_t>& cuts) {
  std::string out;
  for (std::size_t i = 0; i < cuts.size(); ++i) {
    out += (i ? "," : "") + std::to_string(cuts[i]);
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::vector<std::size_t> parse_bucket_edges(const std::string& s) {
  try {
    return detail::parse_cuts(s);
  } catch (const detail::ValueError& e) {
    throw Error(ErrorCode::ParseError, "bucket edges: " + e.what);
  }
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "corgi") return ModelKind::Corgi;
  if (s == "gcn-content-init") return ModelKind::GcnContentInit;
  if (s == "gcn-grape") return ModelKind::GcnGrape;
  if (s == "gcn-label-edges") return ModelKind::GcnLabelEdges;
  throw Error(ErrorCode::InvalidConfig,
              "unknown model '" + s + "' (expected corgi, gcn-content-init, gcn-grape or gcn-label-edges)");
}

namespace detail {

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

inline const std::map<std::string, Key>& config_keys() {
  static const std::map<std::string, Key> keys = [] {
    std::map<std::string, Key> k;
    auto str = [](std::string DataConfig::*field) {
      return Key{[field](ExperimentConfig& c, const std::string& v) { c.data.*field = v; },
                 [field](const ExperimentConfig& c) { return c.data.*field; }};
    };
    k["data.source"] = {[](ExperimentConfig& c, const std::string& v) {
                          if (v == "file") c.data.source = DataSource::File;
                          else if (v == "synthetic") c.data.source = DataSource::Synthetic;
                          else throw ValueError{"expected 'file' or 'synthetic'"};
                        },
                        [](const ExperimentConfig& c) {
                          return std::string(c.data.source == DataSource::File ? "file" : "synthetic");
                        }};
    k["data.edges"] = str(&DataConfig::edges);
    k["data.content"] = str(&DataConfig::content);
    k["data.focus"] = str(&DataConfig::focus);
    k["data.num_users"] = {[](ExperimentConfig& c, const std::string& v) { c.data.num_users = parse_number<std::size_t>(v); },
                           [](const ExperimentConfig& c) { return c.data.num_users ? std::to_string(*c.data.num_users) : ""; }};
    k["data.num_items"] = {[](ExperimentConfig& c, const std::string& v) { c.data.num_items = parse_number<std::size_t>(v); },
                           [](const ExperimentConfig& c) { return c.data.num_items ? std::to_string(*c.data.num_items) : ""; }};
    k["data.label_count"] = {[](ExperimentConfig& c, const std::string& v) { c.data.label_count = parse_number<int>(v); },
                             [](const ExperimentConfig& c) { return c.data.label_count ? std::to_string(*c.data.label_count) : ""; }};
    k["data.label_offset"] = {[](ExperimentConfig& c, const std::string& v) { c.data.label_offset = parse_number<int>(v); },
                              [](const ExperimentConfig& c) { return std::to_string(c.data.label_offset); }};

    k["synthetic.num_users"] = {[](ExperimentConfig& c, const std::string& v) { c.synthetic.num_users = parse_number<std::size_t>(v); },
                                [](const ExperimentConfig& c) { return std::to_string(c.synthetic.num_users); }};
    k["synthetic.num_items"] = {[](ExperimentConfig& c, const std::string& v) { c.synthetic.num_items = parse_number<std::size_t>(v); },
                                [](const ExperimentConfig& c) { return std::to_string(c.synthetic.num_items); }};
    k["synthetic.num_edges"] = {[](ExperimentConfig& c, const std::string& v) { c.synthetic.num_edges = parse_number<std::size_t>(v); },
                                [](const ExperimentConfig& c) { return std::to_string(c.synthetic.num_edges); }};
    k["synthetic.vocab_size"] = {[](ExperimentConfig& c, const std::string& v) { c.synthetic.vocab_size = parse_number<std::size_t>(v); },
                                 [](const ExperimentConfig& c) { return std::to_string(c.synthetic.vocab_size); }};
    k["synthetic.word_prob"] = {[](ExperimentConfig& c, const std::string& v) { c.synthetic.word_prob = parse_number<double>(v); },
                                [](const ExperimentConfig& c) { return format_double(c.synthetic.word_prob); }};
    k["synthetic.seed"] = {[](ExperimentConfig& c, const std::string& v) { c.synthetic.seed = parse_number<std::uint64_t>(v); },
                           [](const ExperimentConfig& c) { return std::to_string(c.synthetic.seed); }};

    auto int_field = [](int ModelConfig::*field) {
      return Key{[field](ExperimentConfig& c, const std::string& v) { c.model.*field = parse_number<int>(v); },
                 [field](const ExperimentConfig& c) { return std::to_string(c.model.*field); }};
    };
    auto bool_field = [](bool ModelConfig::*field) {
      return Key{[field](ExperimentConfig& c, const std::string& v) { c.model.*field = parse_bool(v); },
                 [field](const ExperimentConfig& c) { return std::string(c.model.*field ? "true" : "false"); }};
    };
    auto rate_field = [](double DropoutRates::*field) {
      return Key{[field](ExperimentConfig& c, const std::string& v) { c.model.dropout.*field = parse_number<double>(v); },
                 [field](const ExperimentConfig& c) { return format_double(c.model.dropout.*field); }};
    };
    k["model.kind"] = {[](ExperimentConfig& c, const std::string& v) { c.model.kind = parse_model_kind(v); },
                       [](const ExperimentConfig& c) { return to_string(c.model.kind); }};
    k["model.layers"] = int_field(&ModelConfig::layers);
    k["model.node_dim"] = int_field(&ModelConfig::node_dim);
    k["model.edge_dim"] = int_field(&ModelConfig::edge_dim);
    k["model.readout_hidden"] = int_field(&ModelConfig::readout_hidden);
    k["model.attention"] = {[](ExperimentConfig& c, const std::string& v) {
                              if (v == "dp") c.model.attention = AttentionKind::DotProduct;
                              else if (v == "co") c.model.attention = AttentionKind::Concat;
                              else throw ValueError{"expected 'dp' or 'co'"};
                            },
                            [](const ExperimentConfig& c) {
                              return std::string(c.model.attention == AttentionKind::DotProduct ? "dp" : "co");
                            }};
    k["model.combination"] = {[](ExperimentConfig& c, const std::string& v) {
                                if (v == "add") c.model.combination = Combination::Add;
                                else if (v == "concat") c.model.combination = Combination::Concat;
                                else throw ValueError{"expected 'add' or 'concat'"};
                              },
                              [](const ExperimentConfig& c) {
                                return std::string(c.model.combination == Combination::Add ? "add" : "concat");
                              }};
    k["model.aggregation"] = {[](ExperimentConfig& c, const std::string& v) {
                                if (v != "mean") throw ValueError{"only 'mean' aggregation is supported"};
                                c.model.aggregation = Aggregation::Mean;
                              },
                              [](const ExperimentConfig&) { return std::string("mean"); }};
    k["model.bidirectional_ca"] = bool_field(&ModelConfig::bidirectional_ca);
    k["model.trainable_node_init"] = bool_field(&ModelConfig::trainable_node_init);
    k["model.split_value_projection"] = bool_field(&ModelConfig::split_value_projection);
    k["model.attention_slope"] = {[](ExperimentConfig& c, const std::string& v) { c.model.attention_slope = parse_number<double>(v); },
                                  [](const ExperimentConfig& c) { return format_double(c.model.attention_slope); }};
    k["model.dropout_message"] = rate_field(&DropoutRates::message);
    k["model.dropout_edge"] = rate_field(&DropoutRates::edge);
    k["model.dropout_mlp"] = rate_field(&DropoutRates::mlp);

    auto adam_field = [](double AdamHyper::*field) {
      return Key{[field](ExperimentConfig& c, const std::string& v) { c.train.adam.*field = parse_number<double>(v); },
                 [field](const ExperimentConfig& c) { return format_double(c.train.adam.*field); }};
    };
    k["train.lr"] = adam_field(&AdamHyper::lr);
    k["train.beta1"] = adam_field(&AdamHyper::beta1);
    k["train.beta2"] = adam_field(&AdamHyper::beta2);
    k["train.eps"] = adam_field(&AdamHyper::eps);
    k["train.max_epochs"] = {[](ExperimentConfig& c, const std::string& v) { c.train.max_epochs = parse_number<int>(v); },
                             [](const ExperimentConfig& c) { return std::to_string(c.train.max_epochs); }};
    k["train.patience"] = {[](ExperimentConfig& c, const std::string& v) { c.train.patience = parse_number<int>(v); },
                           [](const ExperimentConfig& c) { return std::to_string(c.train.patience); }};
    k["train.seed"] = {[](ExperimentConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>(v); },
                       [](const ExperimentConfig& c) { return std::to_string(c.train.seed); }};
    k["train.split_seed"] = {[](ExperimentConfig& c, const std::string& v) { c.split_seed = parse_number<std::uint64_t>(v); },
                             [](const ExperimentConfig& c) { return std::to_string(c.split_seed); }};
    k["train.caching"] = {[](ExperimentConfig& c, const std::string& v) { c.train.caching = parse_bool(v); },
                          [](const ExperimentConfig& c) { return std::string(c.train.caching ? "true" : "false"); }};
    k["train.sample_items"] = {[](ExperimentConfig& c, const std::string& v) {
                                 if (v == "none" || v.empty()) c.train.sample_items.reset();
                                 else c.train.sample_items = parse_number<std::size_t>(v);
                               },
                               [](const ExperimentConfig& c) {
                                 return c.train.sample_items ? std::to_string(*c.train.sample_items) : std::string("none");
                               }};

    k["output.dir"] = {[](ExperimentConfig& c, const std::string& v) { c.output.dir = v; },
                       [](const ExperimentConfig& c) { return c.output.dir; }};
    k["output.bucket_edges"] = {[](ExperimentConfig& c, const std::string& v) { c.output.bucket_edges = parse_cuts(v); },
                                [](const ExperimentConfig& c) { return join_cuts(c.output.bucket_edges); }};
    return k;
  }();
  return keys;
}

}  // namespace detail

/// Parses configuration text. `base_dir` resolves relative data paths.
inline ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>",
                                     const std::filesystem::path& base_dir = {}) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto& keys = detail::config_keys();
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = detail::trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ParseError, where + ": expected 'section.key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    auto it = keys.find(key);
    if (it == keys.end()) {
      throw Error(ErrorCode::UnknownKey, where + ": unknown key '" + key + "'");
    }
    try {
      it->second.set(cfg, value);
    } catch (const detail::ValueError& e) {
      throw Error(ErrorCode::ParseError, where + ": " + key + ": " + e.what);
    }
  }
  auto resolve = [&](std::string& path) {
    if (!path.empty() && !base_dir.empty() && std::filesystem::path(path).is_relative()) {
      path = (base_dir / path).lexically_normal().string();
    }
  };
  resolve(cfg.data.edges);
  resolve(cfg.data.content);
  resolve(cfg.data.focus);
  if (cfg.data.source == DataSource::File && cfg.data.edges.empty()) {
    throw Error(ErrorCode::MissingRequired, origin + ": data.edges is required when data.source = file");
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open config '" + path + "'");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path, std::filesystem::absolute(path).parent_path());
}

/// Every key with its current value, one per line; parses back to `cfg`.
inline std::string format_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, k] : detail::config_keys()) {
    const std::string v = k.get(cfg);
    if (v.empty()) {
      continue;
    }
    out += key + " = " + v + "\n";
  }
  return out;
}

struct LoadedData {
  ContentGraph graph;
  /// Per-user focus word when known (synthetic data or data.focus).
  std::vector<int> focus;
};

inline std::vector<int> read_focus(const std::string& path, std::size_t num_users) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open focus file '" + path + "'");
  }
  std::vector<int> focus(num_users, -1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) {
      continue;
    }
    auto fields = detail::split_tabs(line);
    if (fields.size() != 2) {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": expected user<TAB>focus_word");
    }
    const auto u = detail::parse_int(fields[0], path, lineno, "user id");
    const auto w = detail::parse_int(fields[1], path, lineno, "focus word");
    if (u < 0 || static_cast<std::size_t>(u) >= num_users) {
      throw Error(ErrorCode::IndexOutOfRange, path + ":" + std::to_string(lineno) + ": user " + std::to_string(u) +
                                                  " outside the graph");
    }
    focus[static_cast<std::size_t>(u)] = static_cast<int>(w);
  }
  return focus;
}

inline void write_focus(const std::string& path, const std::vector<int>& focus) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  }
  for (std::size_t u = 0; u < focus.size(); ++u) {
    out << u << '\t' << focus[u] << '\n';
  }
}

inline LoadedData load_data(const ExperimentConfig& cfg) {
  if (cfg.data.source == DataSource::Synthetic) {
    SyntheticDataset ds = generate(cfg.synthetic);
    return {attach_content(std::move(ds.graph), ds.content), std::move(ds.focus)};
  }
  auto edges = read_edges(cfg.data.edges, cfg.data.label_offset);
  std::size_t users = 0;
  std::size_t items = 0;
  int labels = 2;
  for (const auto& e : edges) {
    users = std::max(users, static_cast<std::size_t>(std::max(e.user, 0)) + 1);
    items = std::max(items, static_cast<std::size_t>(std::max(e.item, 0)) + 1);
    labels = std::max(labels, e.label + 1);
  }
  ContentStore content(1, 1);
  bool has_content = !cfg.data.content.empty();
  if (has_content) {
    content = read_content(cfg.data.content);
    for (const auto& [item, rows] : content.vectors()) {
      items = std::max(items, item + 1);
    }
  }
  users = cfg.data.num_users.value_or(users);
  items = cfg.data.num_items.value_or(items);
  labels = cfg.data.label_count.value_or(labels);
  BipartiteGraph g = build_graph(std::move(edges), users, items, labels);
  LoadedData out{attach_content(std::move(g), content), {}};
  if (!cfg.data.focus.empty()) {
    out.focus = read_focus(cfg.data.focus, users);
  }
  return out;
}

}  // namespace corgi
