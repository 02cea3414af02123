#pragma once

// Text formats for edges and item content.
//
//   edges:    user<TAB>item<TAB>label                      (one per line)
//   content:  D=<dim> T=<truncation>                        (header)
//             item<TAB>row<TAB>v_0 v_1 ... v_{D-1}          (rows of an item
//                                                            contiguous, row = 0,1,...)

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "corgi/error.hpp"
#include "corgi/graph.hpp"

namespace corgi {

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) {
      break;
    }
    start = tab + 1;
  }
  return out;
}

inline std::string where(const std::string& path, std::size_t line) { return path + ":" + std::to_string(line); }

inline long long parse_int(std::string_view s, const std::string& path, std::size_t line, const char* field) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::ParseError, where(path, line) + ": bad " + field + " '" + std::string(s) + "'");
  }
  return v;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
}

}  // namespace detail

/// Raw edge triples as they appear in the file; `label_offset` is
/// subtracted from every label (e.g. 1 for ratings 1..5).
inline std::vector<LabeledEdge> read_edges(const std::string& path, int label_offset = 0) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open edge file '" + path + "'");
  }
  std::vector<LabeledEdge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) {
      continue;
    }
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3) {
      throw Error(ErrorCode::ParseError, detail::where(path, lineno) + ": expected 3 tab-separated fields, got " +
                                             std::to_string(fields.size()));
    }
    LabeledEdge e;
    e.user = static_cast<std::int32_t>(detail::parse_int(fields[0], path, lineno, "user id"));
    e.item = static_cast<std::int32_t>(detail::parse_int(fields[1], path, lineno, "item id"));
    e.label = static_cast<std::int32_t>(detail::parse_int(fields[2], path, lineno, "label") - label_offset);
    edges.push_back(e);
  }
  return edges;
}

inline void write_edges(const std::string& path, const BipartiteGraph& g, int label_offset = 0) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  }
  for (const auto& e : g.edges()) {
    out << e.user << '\t' << e.item << '\t' << (e.label + label_offset) << '\n';
  }
}

inline ContentStore read_content(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open content file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::ParseError, detail::where(path, 1) + ": missing 'D=<int> T=<int>' header");
  }
  detail::strip_cr(line);
  long long dim = 0;
  long long trunc = 0;
  {
    std::istringstream head(line);
    std::string d;
    std::string t;
    if (!(head >> d >> t) || !d.starts_with("D=") || !t.starts_with("T=")) {
      throw Error(ErrorCode::ParseError, detail::where(path, 1) + ": header must be 'D=<int> T=<int>'");
    }
    dim = detail::parse_int(std::string_view(d).substr(2), path, 1, "D");
    trunc = detail::parse_int(std::string_view(t).substr(2), path, 1, "T");
    if (dim < 1 || trunc < 1) {
      throw Error(ErrorCode::ParseError, detail::where(path, 1) + ": D and T must be positive");
    }
  }
  ContentStore cs(static_cast<std::size_t>(dim), static_cast<std::size_t>(trunc));
  std::vector<std::vector<double>> rows;
  long long current = -1;
  auto flush = [&]() {
    if (current < 0) {
      return;
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (long long c = 0; c < dim; ++c) {
        m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
      }
    }
    cs.set(static_cast<std::size_t>(current), m);
    rows.clear();
  };
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    detail::strip_cr(line);
    if (line.empty()) {
      continue;
    }
    auto fields = detail::split_tabs(line);
    if (fields.size() != 3) {
      throw Error(ErrorCode::ParseError, detail::where(path, lineno) + ": expected item<TAB>row<TAB>values");
    }
    const long long item = detail::parse_int(fields[0], path, lineno, "item id");
    const long long row = detail::parse_int(fields[1], path, lineno, "row index");
    if (item < 0) {
      throw Error(ErrorCode::ParseError, detail::where(path, lineno) + ": negative item id");
    }
    if (item != current) {
      if (row != 0) {
        throw Error(ErrorCode::ParseError, detail::where(path, lineno) + ": item " + std::to_string(item) +
                                               " must start at row 0");
      }
      if (cs.contains(static_cast<std::size_t>(item))) {
        throw Error(ErrorCode::ParseError, detail::where(path, lineno) + ": rows of item " + std::to_string(item) +
                                               " are not contiguous");
      }
      flush();
      current = item;
    } else if (row != static_cast<long long>(rows.size())) {
      throw Error(ErrorCode::ParseError, detail::where(path, lineno) + ": expected row " +
                                             std::to_string(rows.size()) + " of item " + std::to_string(item));
    }
    std::vector<double> values;
    std::string buffer(fields[2]);
    const char* cursor = buffer.c_str();
    while (true) {
      while (*cursor == ' ') {
        ++cursor;
      }
      if (*cursor == '\0') {
        break;
      }
      char* end = nullptr;
      const double v = std::strtod(cursor, &end);
      if (end == cursor) {
        throw Error(ErrorCode::ParseError, detail::where(path, lineno) + ": bad number in content row");
      }
      values.push_back(v);
      cursor = end;
    }
    if (values.size() != static_cast<std::size_t>(dim)) {
      throw Error(ErrorCode::DimensionMismatch, detail::where(path, lineno) + ": row has " +
                                                    std::to_string(values.size()) + " values, D=" + std::to_string(dim));
    }
    rows.push_back(std::move(values));
  }
  flush();
  return cs;
}

/// Writes rows with 17 significant digits, enough to read back exactly.
inline void write_content(const std::string& path, const ContentStore& cs) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  }
  out << "D=" << cs.dim() << " T=" << cs.truncation() << '\n';
  char buf[40];
  for (const auto& [item, m] : cs.vectors()) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      out << item << '\t' << r << '\t';
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
        out << (c > 0 ? " " : "") << buf;
      }
      out << '\n';
    }
  }
}

}  // namespace corgi
