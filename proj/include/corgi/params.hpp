#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "corgi/error.hpp"
#include "corgi/tensor.hpp"

namespace corgi {

/// Named trainable tensors in insertion order. Gradients use the same type.
class ParamStore {
 public:
  void add(const std::string& name, Matrix value) {
    if (index_.contains(name)) {
      throw Error(ErrorCode::InvalidConfig, "duplicate parameter '" + name + "'");
    }
    index_.emplace(name, names_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw Error(ErrorCode::ShapeMismatch, "parameter '" + name + "' does not exist");
    }
    return it->second;
  }

  Matrix& at(const std::string& name) { return values_[index(name)]; }
  const Matrix& at(const std::string& name) const { return values_[index(name)]; }
  Matrix& at(std::size_t i) { return values_[i]; }
  const Matrix& at(std::size_t i) const { return values_[i]; }

  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) {
      n += static_cast<std::size_t>(v.size());
    }
    return n;
  }

  ParamStore zeros_like() const {
    ParamStore out;
    for (std::size_t i = 0; i < size(); ++i) {
      out.add(names_[i], Matrix::Zero(values_[i].rows(), values_[i].cols()));
    }
    return out;
  }

  bool same_layout(const ParamStore& other) const {
    if (other.size() != size()) {
      return false;
    }
    for (std::size_t i = 0; i < size(); ++i) {
      if (other.names_[i] != names_[i] || other.values_[i].rows() != values_[i].rows() ||
          other.values_[i].cols() != values_[i].cols()) {
        return false;
      }
    }
    return true;
  }

  friend bool bit_equal(const ParamStore& a, const ParamStore& b) {
    if (!a.same_layout(b)) {
      return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!bit_equal(a.values_[i], b.values_[i])) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Gradients = ParamStore;

struct AdamHyper {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::int64_t step = 0;

  static AdamState for_params(const ParamStore& params, AdamHyper hyper = {}) {
    AdamState s;
    s.hyper = hyper;
    for (std::size_t i = 0; i < params.size(); ++i) {
      s.first.push_back(Matrix::Zero(params.at(i).rows(), params.at(i).cols()));
      s.second.push_back(Matrix::Zero(params.at(i).rows(), params.at(i).cols()));
    }
    return s;
  }
};

/// One bias-corrected Adam update, in place. The step counter is advanced
/// before the bias correction is applied.
inline void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  if (!params.same_layout(grads) || state.first.size() != params.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradients or optimiser state do not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first[i].rows() != params.at(i).rows() || state.first[i].cols() != params.at(i).cols()) {
      throw Error(ErrorCode::ShapeMismatch, "optimiser moment for '" + params.name(i) + "' has wrong shape");
    }
  }
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& m = state.first[i];
    Matrix& v = state.second[i];
    const Matrix& g = grads.at(i);
    Matrix& p = params.at(i);
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double gk = g.data()[k];
      m.data()[k] = h.beta1 * m.data()[k] + (1.0 - h.beta1) * gk;
      v.data()[k] = h.beta2 * v.data()[k] + (1.0 - h.beta2) * gk * gk;
      const double mhat = m.data()[k] / c1;
      const double vhat = v.data()[k] / c2;
      p.data()[k] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

/// Central differences of a scalar function at x.
inline double finite_difference(const std::function<double(double)>& f, double x, double eps = 1e-5) {
  return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

/// Central-difference gradient of `f` with respect to every coordinate of
/// every parameter. `f` must be deterministic.
inline Gradients finite_difference_grad(const std::function<double(const ParamStore&)>& f,
                                        ParamStore params, double eps = 1e-5) {
  Gradients out = params.zeros_like();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params.at(i);
    for (Eigen::Index k = 0; k < p.size(); ++k) {
      const double saved = p.data()[k];
      p.data()[k] = saved + eps;
      const double up = f(params);
      p.data()[k] = saved - eps;
      const double down = f(params);
      p.data()[k] = saved;
      out.at(i).data()[k] = (up - down) / (2.0 * eps);
    }
  }
  return out;
}

/// Per-parameter relative error between two gradient sets:
/// max|a - b| / max(max|a|, max|b|, floor). The floor keeps a parameter with
/// an identically zero gradient from reporting roundoff over roundoff.
struct GradCheckReport {
  std::map<std::string, double> relative_error;

  double worst() const {
    double w = 0.0;
    for (const auto& [_, e] : relative_error) {
      w = std::max(w, e);
    }
    return w;
  }
};

inline GradCheckReport compare_gradients(const Gradients& analytic, const Gradients& numeric, double floor = 1e-6) {
  if (!analytic.same_layout(numeric)) {
    throw Error(ErrorCode::ShapeMismatch, "gradient sets have different layouts");
  }
  GradCheckReport report;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const Matrix& a = analytic.at(i);
    const Matrix& n = numeric.at(i);
    const double scale = std::max({a.cwiseAbs().maxCoeff(), n.cwiseAbs().maxCoeff(), floor});
    report.relative_error[analytic.name(i)] = (a - n).cwiseAbs().maxCoeff() / scale;
  }
  return report;
}

// Checkpoints ---------------------------------------------------------------

inline constexpr const char* kCheckpointHeader = "CORGI-CKPT v1";

namespace detail {

inline std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

}  // namespace detail

/// Writes `name<TAB>rows<TAB>cols` followed by one line of hexadecimal
/// float literals per record. Extra records (e.g. cache vectors) are
/// appended after the parameters.
inline void save_checkpoint(const std::string& path, const ParamStore& params,
                            const std::vector<std::pair<std::string, Matrix>>& extra = {}) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  }
  out << kCheckpointHeader << '\n';
  auto write_record = [&out](const std::string& name, const Matrix& m) {
    out << name << '\t' << m.rows() << '\t' << m.cols() << '\n';
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      if (k > 0) {
        out << ' ';
      }
      out << detail::hex_double(m.data()[k]);
    }
    out << '\n';
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    write_record(params.name(i), params.at(i));
  }
  for (const auto& [name, m] : extra) {
    write_record(name, m);
  }
  if (!out) {
    throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
  }
}

/// All records of a checkpoint file in file order.
inline std::vector<std::pair<std::string, Matrix>> read_checkpoint_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader) {
    throw Error(ErrorCode::FormatVersionMismatch, "'" + path + "' is not a " + kCheckpointHeader + " file");
  }
  std::vector<std::pair<std::string, Matrix>> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    std::istringstream head(line);
    std::string name;
    long rows = -1;
    long cols = -1;
    if (!std::getline(head, name, '\t') || !(head >> rows >> cols) || rows < 0 || cols < 0) {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": bad record header");
    }
    std::string values;
    if (!std::getline(in, values)) {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno + 1) + ": missing values for '" + name + "'");
    }
    ++lineno;
    if (in.eof()) {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": truncated record '" + name + "'");
    }
    Matrix m(rows, cols);
    const char* cursor = values.c_str();
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      char* end = nullptr;
      m.data()[k] = std::strtod(cursor, &end);
      if (end == cursor) {
        throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": expected " +
                                               std::to_string(m.size()) + " values for '" + name + "'");
      }
      cursor = end;
    }
    while (*cursor == ' ') {
      ++cursor;
    }
    if (*cursor != '\0') {
      throw Error(ErrorCode::ParseError, path + ":" + std::to_string(lineno) + ": trailing data for '" + name + "'");
    }
    records.emplace_back(std::move(name), std::move(m));
  }
  return records;
}

/// Loads a checkpoint into a store whose layout is already known (built from
/// the model configuration). Every parameter must be present with the same
/// shape; records prefixed `cache/` are ignored here.
inline void load_checkpoint(const std::string& path, ParamStore& params) {
  auto records = read_checkpoint_records(path);
  std::vector<bool> seen(params.size(), false);
  for (auto& [name, m] : records) {
    if (name.starts_with("cache/")) {
      continue;
    }
    if (!params.contains(name)) {
      throw Error(ErrorCode::ShapeMismatch, "checkpoint parameter '" + name + "' does not exist in this model");
    }
    const std::size_t i = params.index(name);
    Matrix& target = params.at(i);
    if (target.rows() != m.rows() || target.cols() != m.cols()) {
      throw Error(ErrorCode::ShapeMismatch,
                  "parameter '" + name + "' has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                      " in checkpoint but " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()) +
                      " in model");
    }
    target = std::move(m);
    seen[i] = true;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!seen[i]) {
      throw Error(ErrorCode::ParseError, "checkpoint '" + path + "' is incomplete: parameter '" + params.name(i) + "' missing");
    }
  }
}

}  // namespace corgi
