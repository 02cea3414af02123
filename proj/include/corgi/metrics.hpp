#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "corgi/error.hpp"

namespace corgi {

namespace detail {

inline void require_aligned(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": " + std::to_string(a) + " scores vs " +
                                              std::to_string(b) + " labels");
  }
  if (a == 0) {
    throw Error(ErrorCode::EmptyInput, std::string(what) + " of an empty sample");
  }
}

inline std::pair<std::size_t, std::size_t> class_counts(const std::vector<int>& labels, const char* what) {
  std::size_t pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) {
      throw Error(ErrorCode::DomainError, std::string(what) + " needs 0/1 labels, got " + std::to_string(y));
    }
    pos += static_cast<std::size_t>(y);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw Error(ErrorCode::SingleClass, std::string(what) + " is undefined when only one class is present");
  }
  return {pos, neg};
}

}  // namespace detail

inline double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
  detail::require_aligned(pred.size(), target.size(), "rmse");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    total += (pred[i] - target[i]) * (pred[i] - target[i]);
  }
  return std::sqrt(total / static_cast<double>(pred.size()));
}

/// Fraction of scores on the correct side of `threshold` (score >= threshold
/// predicts 1).
inline double accuracy(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5) {
  detail::require_aligned(scores.size(), labels.size(), "accuracy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    hit += static_cast<std::size_t>((scores[i] >= threshold ? 1 : 0) == labels[i]);
  }
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

/// Mann-Whitney estimate of P(score_pos > score_neg), ties counting 1/2,
/// computed from average ranks.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  detail::require_aligned(scores.size(), labels.size(), "auroc");
  const auto [pos, neg] = detail::class_counts(labels, "auroc");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += avg_rank;
      }
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double n = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

/// Area under the precision-recall step curve: sum over distinct score
/// thresholds (descending) of (recall gain) x (precision at that threshold).
/// Tied scores enter together.
inline double aupr(const std::vector<double>& scores, const std::vector<int>& labels) {
  detail::require_aligned(scores.size(), labels.size(), "aupr");
  const auto [pos, neg] = detail::class_counts(labels, "aupr");
  (void)neg;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += static_cast<std::size_t>(labels[order[j]]);
      ++seen;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

struct MetricBundle {
  bool binary = true;
  std::size_t n = 0;
  double rmse = 0.0;
  double accuracy = 0.0;
  /// Absent when the sample holds a single class.
  std::optional<double> auroc;
  std::optional<double> aupr;
};

inline MetricBundle binary_metrics(const std::vector<double>& scores, const std::vector<int>& labels) {
  MetricBundle b;
  b.binary = true;
  b.n = scores.size();
  b.accuracy = accuracy(scores, labels);
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos > 0 && pos < labels.size()) {
    b.auroc = auroc(scores, labels);
    b.aupr = aupr(scores, labels);
  }
  return b;
}

inline MetricBundle ordinal_metrics(const std::vector<double>& pred, const std::vector<double>& target) {
  MetricBundle b;
  b.binary = false;
  b.n = pred.size();
  b.rmse = rmse(pred, target);
  return b;
}

struct DegreeBucket {
  std::string name;
  std::optional<std::size_t> above;    // degree > above
  std::optional<std::size_t> at_most;  // degree <= at_most

  bool contains(std::size_t degree) const {
    return (!above || degree > *above) && (!at_most || degree <= *at_most);
  }
};

/// "All" followed by the ranges cut at `cuts`: {10} gives All, D<=10, D>10;
/// {5,10} gives All, D<=5, 5<D<=10, D>10.
inline std::vector<DegreeBucket> degree_buckets(std::vector<std::size_t> cuts = {10}) {
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<DegreeBucket> out{{"All", std::nullopt, std::nullopt}};
  if (cuts.empty()) {
    return out;
  }
  out.push_back({"D<=" + std::to_string(cuts.front()), std::nullopt, cuts.front()});
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    out.push_back({std::to_string(cuts[i - 1]) + "<D<=" + std::to_string(cuts[i]), cuts[i - 1], cuts[i]});
  }
  out.push_back({"D>" + std::to_string(cuts.back()), cuts.back(), std::nullopt});
  return out;
}

struct BucketResult {
  std::string name;
  std::size_t count = 0;
  /// Absent for an empty bucket.
  std::optional<MetricBundle> metrics;
};

struct DegreeBucketReport {
  std::vector<BucketResult> buckets;
};

/// Splits the evaluation edges by their user's degree and scores each part.
/// Binary labels when `binary`, otherwise targets are compared by RMSE.
inline DegreeBucketReport degree_bucket_eval(const std::vector<double>& scores, const std::vector<double>& targets,
                                             const std::vector<std::size_t>& user_degree, bool binary,
                                             const std::vector<DegreeBucket>& buckets = degree_buckets()) {
  if (scores.size() != targets.size() || scores.size() != user_degree.size()) {
    throw Error(ErrorCode::ShapeMismatch, "degree_bucket_eval: arrays differ in length");
  }
  DegreeBucketReport report;
  for (const auto& b : buckets) {
    std::vector<double> s;
    std::vector<double> t;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (b.contains(user_degree[i])) {
        s.push_back(scores[i]);
        t.push_back(targets[i]);
      }
    }
    BucketResult r;
    r.name = b.name;
    r.count = s.size();
    if (!s.empty()) {
      if (binary) {
        std::vector<int> y(t.size());
        std::transform(t.begin(), t.end(), y.begin(), [](double v) { return static_cast<int>(std::lround(v)); });
        r.metrics = binary_metrics(s, y);
      } else {
        r.metrics = ordinal_metrics(s, t);
      }
    }
    report.buckets.push_back(std::move(r));
  }
  return report;
}

/// The buckets after "All" are disjoint ranges covering every degree, so
/// their counts must add up to the count of "All".
inline bool partition_holds(const DegreeBucketReport& report) {
  if (report.buckets.empty()) {
    return false;
  }
  if (report.buckets.size() == 1) {
    return true;
  }
  std::size_t total = 0;
  for (std::size_t i = 1; i < report.buckets.size(); ++i) {
    total += report.buckets[i].count;
  }
  return total == report.buckets.front().count;
}

struct AttentionSummary {
  /// Mean alpha on the focus-word row over edges whose item holds the focus word.
  double focus_mass = 0.0;
  /// Mean of 1/n over the same edges (the share a uniform distribution gives).
  double uniform_share = 0.0;
  /// Mean content count n over the same edges.
  double mean_count = 0.0;
  std::size_t present_edges = 0;
  /// Mean H(alpha)/ln(n) over edges without the focus word and n >= 2.
  double absent_entropy = 0.0;
  std::size_t absent_edges = 0;
};

/// `word_of_row[item][k]` is the word behind content row k of that item.
/// Items with a single content row carry no entropy information and are left
/// out of the absent-case mean.
template <typename Records>
AttentionSummary attention_stats(const Records& records, const std::vector<int>& focus,
                                 const std::vector<std::vector<int>>& word_of_row) {
  AttentionSummary s;
  for (const auto& rec : records) {
    const auto& words = word_of_row.at(rec.item);
    if (words.size() != rec.alpha.size()) {
      throw Error(ErrorCode::ShapeMismatch, "attention vector length differs from the item's content count");
    }
    const int f = focus.at(rec.user);
    auto it = std::find(words.begin(), words.end(), f);
    const auto n = static_cast<double>(words.size());
    if (it != words.end()) {
      s.focus_mass += rec.alpha[static_cast<std::size_t>(it - words.begin())];
      s.uniform_share += 1.0 / n;
      s.mean_count += n;
      ++s.present_edges;
    } else if (words.size() >= 2) {
      double h = 0.0;
      for (double a : rec.alpha) {
        if (a > 0.0) {
          h -= a * std::log(a);
        }
      }
      s.absent_entropy += h / std::log(n);
      ++s.absent_edges;
    }
  }
  if (s.present_edges == 0 && s.absent_edges == 0) {
    throw Error(ErrorCode::NoApplicableEdges, "no attention record falls in either the focus-present or absent case");
  }
  if (s.present_edges > 0) {
    const auto k = static_cast<double>(s.present_edges);
    s.focus_mass /= k;
    s.uniform_share /= k;
    s.mean_count /= k;
  }
  if (s.absent_edges > 0) {
    s.absent_entropy /= static_cast<double>(s.absent_edges);
  }
  return s;
}

}  // namespace corgi
