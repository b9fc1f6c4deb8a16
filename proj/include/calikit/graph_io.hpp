// Copyright 2026 The calikit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CALIKIT_GRAPH_IO_HPP_
#define CALIKIT_GRAPH_IO_HPP_

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "calikit/error.hpp"
#include "calikit/graph.hpp"

namespace calikit {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

template <class T>
bool parse_number(std::string_view token, T& out) {
  token = trim(token);
  if (token.empty()) return false;
  if (token.front() == '+') token.remove_prefix(1);
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

inline std::string format_double(double x) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace detail

inline std::vector<Edge> read_edges(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    std::istringstream tokens{std::string(body)};
    std::string a, b, extra;
    NodeId u = 0, v = 0;
    if (!(tokens >> a >> b) || (tokens >> extra) || !detail::parse_number(a, u) ||
        !detail::parse_number(b, v)) {
      throw ParseError(path.string() + ": expected two node ids", lineno);
    }
    edges.emplace_back(u, v);
  }
  return edges;
}

inline Eigen::MatrixXd read_features(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty()) throw ParseError(path.string() + ": empty feature row", lineno);
    std::vector<double> row;
    for (auto field : detail::split_fields(body, ',')) {
      double x = 0.0;
      if (!detail::parse_number(field, x)) {
        throw ParseError(path.string() + ": bad number '" + std::string(field) + "'", lineno);
      }
      row.push_back(x);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path.string() + ": expected " + std::to_string(rows.front().size()) +
                           " columns, found " + std::to_string(row.size()),
                       lineno);
    }
    rows.push_back(std::move(row));
  }
  const auto d = rows.empty() ? 0 : rows.front().size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return x;
}

inline std::vector<ClassId> read_labels(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<ClassId> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    ClassId y = 0;
    if (!detail::parse_number(std::string_view(line), y) || y < 0) {
      throw ParseError(path.string() + ": expected a non-negative class index", lineno);
    }
    labels.push_back(y);
  }
  return labels;
}

/// Reads the three dataset files. Features come back L1 row-normalized. When
/// `class_count` is given, any label at or above it is a DomainError;
/// otherwise the count is inferred from the largest label.
inline Graph load_graph(const std::filesystem::path& edge_file,
                        const std::filesystem::path& feature_file,
                        const std::filesystem::path& label_file,
                        std::optional<int> class_count = std::nullopt) {
  auto labels = read_labels(label_file);
  auto features = read_features(feature_file);
  auto edges = read_edges(edge_file);
  int max_label = 0;
  for (auto y : labels) max_label = std::max(max_label, y);
  if (class_count && max_label >= *class_count) {
    throw DomainError("label " + std::to_string(max_label) + " is not below the class count " +
                      std::to_string(*class_count));
  }
  row_normalize_l1(features);
  return Graph(std::move(edges), std::move(features), std::move(labels),
               class_count.value_or(std::max(2, max_label + 1)));
}

/// Writes the canonical text forms read by load_graph.
inline void save_graph(const Graph& g, const std::filesystem::path& edge_file,
                       const std::filesystem::path& feature_file,
                       const std::filesystem::path& label_file) {
  {
    auto out = detail::open_output(edge_file);
    for (auto [u, v] : g.edges()) out << u << ' ' << v << '\n';
  }
  {
    auto out = detail::open_output(feature_file);
    const auto& x = g.features();
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (c) out << ',';
        out << detail::format_double(x(r, c));
      }
      out << '\n';
    }
  }
  {
    auto out = detail::open_output(label_file);
    for (auto y : g.labels()) out << y << '\n';
  }
}

inline const char* role_name(SplitRole role) {
  switch (role) {
    case SplitRole::kTrain: return "train";
    case SplitRole::kVal: return "val";
    case SplitRole::kTest: return "test";
  }
  return "?";
}

inline void write_split(const DatasetSplit& s, const std::filesystem::path& path) {
  auto out = detail::open_output(path);
  out << "node_id,role\n";
  std::vector<std::pair<NodeId, SplitRole>> rows;
  for (auto v : s.train) rows.emplace_back(v, SplitRole::kTrain);
  for (auto v : s.val) rows.emplace_back(v, SplitRole::kVal);
  for (auto v : s.test) rows.emplace_back(v, SplitRole::kTest);
  std::sort(rows.begin(), rows.end());
  for (auto [v, role] : rows) out << v << ',' << role_name(role) << '\n';
}

/// Label rate is not stored in the file; it is recovered as the training-set
/// size of the rarest class by the caller if needed.
inline DatasetSplit read_split(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  DatasetSplit s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    if (lineno == 1 && body == "node_id,role") continue;
    const auto fields = detail::split_fields(body, ',');
    NodeId v = 0;
    if (fields.size() != 2 || !detail::parse_number(fields[0], v)) {
      throw ParseError(path.string() + ": expected node_id,role", lineno);
    }
    const auto role = detail::trim(fields[1]);
    if (role == "train") {
      s.train.push_back(v);
    } else if (role == "val") {
      s.val.push_back(v);
    } else if (role == "test") {
      s.test.push_back(v);
    } else {
      throw ParseError(path.string() + ": unknown role '" + std::string(role) + "'", lineno);
    }
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace calikit

#endif  // CALIKIT_GRAPH_IO_HPP_
