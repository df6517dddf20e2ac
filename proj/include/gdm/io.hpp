#pragma once

// Plain-text ingestion used by the command-line tool.
//
// Data files hold one record per line, fields separated by commas, tabs,
// semicolons or spaces. Lines starting with '#' and blank lines are skipped.
// An optional first line of column names is detected when any of its fields
// is not a number. Correspondence files have columns x, y, x2, y2 and an
// optional fifth label column; label 0 marks an outlier and 1..K clusters.

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gdm/embedding.hpp"
#include "gdm/error.hpp"
#include "gdm/partition.hpp"

namespace gdm::io {

struct Table {
  std::vector<std::string> header;          // empty when the file has none
  std::vector<std::vector<double>> rows;    // all rows have the same width
  std::vector<std::size_t> line_numbers;    // 1-based source line of each row
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> fields;
  const bool has_hard_separator = line.find_first_of(",;") != std::string_view::npos;
  std::string current;
  auto flush = [&] {
    const auto t = trim(current);
    if (has_hard_separator || !t.empty()) fields.emplace_back(t);
    current.clear();
  };
  for (char c : line) {
    const bool separator = has_hard_separator ? (c == ',' || c == ';') : (c == ' ' || c == '\t');
    if (separator) {
      flush();
    } else {
      current.push_back(c);
    }
  }
  flush();
  return fields;
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  // strtod accepts inf/nan spellings that from_chars handles inconsistently
  // across standard libraries.
  const std::string owned(s);
  char* end = nullptr;
  const double value = std::strtod(owned.c_str(), &end);
  if (end != owned.c_str() + owned.size()) return std::nullopt;
  return value;
}

[[noreturn]] inline void fail(std::size_t line, const std::string& message) {
  throw Error(ErrorKind::parse_error, "line " + std::to_string(line) + ": " + message);
}

}  // namespace detail

inline Table read_table(std::istream& in) {
  Table table;
  std::string line;
  std::size_t number = 0;
  bool seen_data = false;
  while (std::getline(in, line)) {
    ++number;
    const auto content = detail::trim(line);
    if (content.empty() || content.front() == '#') continue;
    const auto fields = detail::split_fields(content);
    std::vector<double> values;
    values.reserve(fields.size());
    bool numeric = true;
    for (const auto& f : fields) {
      const auto v = detail::parse_number(f);
      if (!v) {
        numeric = false;
        break;
      }
      values.push_back(*v);
    }
    if (!numeric) {
      if (seen_data || !table.header.empty()) detail::fail(number, "expected numeric fields");
      table.header = fields;
      continue;
    }
    const std::size_t width = table.rows.empty() ? (table.header.empty() ? values.size() : table.header.size())
                                                 : table.rows.front().size();
    if (values.size() != width) {
      detail::fail(number, "expected " + std::to_string(width) + " fields, found " + std::to_string(values.size()));
    }
    for (double v : values)
      if (!std::isfinite(v)) detail::fail(number, "non-finite value");
    table.rows.push_back(std::move(values));
    table.line_numbers.push_back(number);
    seen_data = true;
  }
  return table;
}

inline Table read_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::invalid_input, "cannot open " + path);
  return read_table(in);
}

/// Whether the last column of the table holds labels: a header naming it
/// "label", or (without header) a fifth column in a correspondence file.
inline bool has_label_column(const Table& table, bool correspondences) {
  if (!table.header.empty()) {
    std::string last = table.header.back();
    for (auto& c : last) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return last == "label";
  }
  return correspondences && !table.rows.empty() && table.rows.front().size() == 5;
}

/// Labels in file convention (0 outlier, 1..K) to a Partition. The cluster
/// count is the largest label seen unless `clusters` is given.
inline Partition labels_to_partition(const std::vector<int>& file_labels, std::optional<int> clusters = std::nullopt) {
  int top = 0;
  std::vector<int> labels;
  labels.reserve(file_labels.size());
  for (int l : file_labels) {
    if (l < 0) throw Error(ErrorKind::parse_error, "negative label " + std::to_string(l));
    top = std::max(top, l);
    labels.push_back(l == 0 ? Partition::kOutlier : l - 1);
  }
  return Partition(std::move(labels), clusters.value_or(top));
}

inline std::vector<int> partition_to_labels(const Partition& partition) {
  std::vector<int> out;
  out.reserve(partition.size());
  for (int l : partition.labels) out.push_back(l == Partition::kOutlier ? 0 : l + 1);
  return out;
}

namespace detail {

inline int to_label(double v, std::size_t line) {
  if (v != std::floor(v) || v < 0.0) fail(line, "labels must be nonnegative integers");
  return static_cast<int>(v);
}

}  // namespace detail

struct CorrespondenceFile {
  std::vector<PointCorrespondence> points;
  std::optional<Partition> truth;
};

inline CorrespondenceFile parse_correspondences(const Table& table) {
  if (table.rows.empty()) throw Error(ErrorKind::parse_error, "no data rows");
  const bool labelled = has_label_column(table, true);
  const std::size_t expected = labelled ? 5 : 4;
  CorrespondenceFile out;
  std::vector<int> labels;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    if (r.size() != expected) {
      detail::fail(table.line_numbers[i], "expected x,y,x2,y2" + std::string(labelled ? ",label" : ""));
    }
    out.points.push_back({r[0], r[1], r[2], r[3]});
    if (labelled) labels.push_back(detail::to_label(r[4], table.line_numbers[i]));
  }
  if (labelled) out.truth = labels_to_partition(labels);
  return out;
}

struct VectorFile {
  Eigen::MatrixXd data;  // D x N
  std::optional<Partition> truth;
};

/// Rows are raw data vectors; a trailing column named "label" is split off.
inline VectorFile parse_vectors(const Table& table) {
  if (table.rows.empty()) throw Error(ErrorKind::parse_error, "no data rows");
  const bool labelled = has_label_column(table, false);
  const std::size_t width = table.rows.front().size() - (labelled ? 1 : 0);
  if (width == 0) throw Error(ErrorKind::parse_error, "rows have no data columns");
  VectorFile out;
  out.data.resize(static_cast<Eigen::Index>(width), static_cast<Eigen::Index>(table.rows.size()));
  std::vector<int> labels;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t c = 0; c < width; ++c)
      out.data(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = table.rows[i][c];
    if (labelled) labels.push_back(detail::to_label(table.rows[i][width], table.line_numbers[i]));
  }
  if (labelled) out.truth = labels_to_partition(labels);
  return out;
}

/// Labels from either a one-column label file or the label column of a data
/// file.
inline Partition read_labels(const std::string& path) {
  const Table table = read_table_file(path);
  if (table.rows.empty()) throw Error(ErrorKind::parse_error, path + ": no labels");
  const std::size_t width = table.rows.front().size();
  if (width != 1 && !has_label_column(table, width == 5)) {
    throw Error(ErrorKind::parse_error, path + ": no label column");
  }
  std::vector<int> labels;
  for (std::size_t i = 0; i < table.rows.size(); ++i)
    labels.push_back(detail::to_label(table.rows[i].back(), table.line_numbers[i]));
  return labels_to_partition(labels);
}

inline void write_labels(std::ostream& out, const Partition& partition) {
  for (int l : partition_to_labels(partition)) out << l << '\n';
}

inline void write_correspondences(std::ostream& out, const std::vector<PointCorrespondence>& points,
                                  const Partition& truth) {
  out.precision(17);
  out << "x,y,x2,y2,label\n";
  const auto labels = partition_to_labels(truth);
  for (std::size_t n = 0; n < points.size(); ++n) {
    const auto& p = points[n];
    out << p.x << ',' << p.y << ',' << p.x2 << ',' << p.y2 << ',' << labels[n] << '\n';
  }
}

inline void write_vectors(std::ostream& out, const Eigen::Ref<const Eigen::MatrixXd>& data, const Partition& truth) {
  out.precision(17);
  for (Eigen::Index i = 0; i < data.rows(); ++i) out << 'v' << (i + 1) << ',';
  out << "label\n";
  const auto labels = partition_to_labels(truth);
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    for (Eigen::Index i = 0; i < data.rows(); ++i) out << data(i, j) << ',';
    out << labels[static_cast<std::size_t>(j)] << '\n';
  }
}

}  // namespace gdm::io
