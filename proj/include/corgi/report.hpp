#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "corgi/metrics.hpp"
#include "corgi/model.hpp"
#include "corgi/training.hpp"

namespace corgi {

/// Shortest text that reads back to the same double.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_double(*v) : "NA"; }

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  }
  return out;
}

}  // namespace detail

inline void write_history(const std::string& path, const TrainHistory& h) {
  auto out = detail::open_out(path);
  out << "epoch\ttrain_loss\tval_loss\tval_metric\tseconds\n";
  for (const auto& e : h.epochs) {
    out << e.epoch << '\t' << fmt_double(e.train_loss) << '\t' << fmt_double(e.val_loss) << '\t'
        << fmt_double(e.val_metric) << '\t' << fmt_double(e.seconds) << '\n';
  }
}

/// Rows of `metric split bucket value n`; an empty bucket or a metric that is
/// undefined on its sample prints NA.
inline std::vector<std::string> metric_rows(const std::string& split, const DegreeBucketReport& report, bool binary) {
  std::vector<std::string> rows;
  for (const auto& b : report.buckets) {
    auto row = [&](const char* metric, const std::string& value) {
      rows.push_back(std::string(metric) + '\t' + split + '\t' + b.name + '\t' + value + '\t' + std::to_string(b.count));
    };
    const auto& m = b.metrics;
    if (binary) {
      row("accuracy", m ? fmt_double(m->accuracy) : "NA");
      row("auroc", m ? fmt_opt(m->auroc) : "NA");
      row("aupr", m ? fmt_opt(m->aupr) : "NA");
    } else {
      row("rmse", m ? fmt_double(m->rmse) : "NA");
    }
  }
  return rows;
}

inline void write_metrics(const std::string& path, const std::vector<std::string>& rows) {
  auto out = detail::open_out(path);
  out << "metric\tsplit\tbucket\tvalue\tn\n";
  for (const auto& r : rows) {
    out << r << '\n';
  }
}

/// One row per attention record; alpha values comma-separated in content-row order.
inline void write_attention(const std::string& path, const std::vector<AttentionRecord>& records) {
  auto out = detail::open_out(path);
  out << "edge\tuser\titem\tlayer\tdirection\talpha\n";
  for (const auto& r : records) {
    out << r.edge << '\t' << r.user << '\t' << r.item << '\t' << r.layer << '\t' << r.direction << '\t';
    for (std::size_t k = 0; k < r.alpha.size(); ++k) {
      out << (k ? "," : "") << fmt_double(r.alpha[k]);
    }
    out << '\n';
  }
}

}  // namespace corgi
