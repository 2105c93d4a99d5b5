#pragma once

// Typed, append-only metric rows persisted as RFC-4180 CSV with LF line
// endings. Reals are printed with 17 significant digits so a read-back
// reproduces the exact double.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace relearn {

using MetricValue = std::variant<std::int64_t, std::uint64_t, double, std::string>;

inline std::string format_metric(const MetricValue& v) {
  char buf[64];
  if (std::holds_alternative<std::int64_t>(v)) {
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(std::get<std::int64_t>(v)));
    return buf;
  }
  if (std::holds_alternative<std::uint64_t>(v)) {
    std::snprintf(buf, sizeof(buf), "%llu",
                  static_cast<unsigned long long>(std::get<std::uint64_t>(v)));
    return buf;
  }
  if (std::holds_alternative<double>(v)) {
    std::snprintf(buf, sizeof(buf), "%.17g", std::get<double>(v));
    return buf;
  }
  const std::string& s = std::get<std::string>(v);
  bool needs_quotes = s.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs_quotes) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<MetricValue>>& rows() const { return rows_; }
  std::size_t row_count() const { return rows_.size(); }

  void append(std::vector<MetricValue> row) {
    if (row.size() != columns_.size())
      throw std::invalid_argument("MetricsLog: row width does not match schema");
    rows_.push_back(std::move(row));
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<MetricValue>> rows_;
};

// append=true skips the header and adds rows to an existing file, so two
// appends produce the same bytes as one combined write.
inline void write_metrics(const MetricsLog& log, const std::filesystem::path& path,
                          bool append = false) {
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw std::runtime_error("write_metrics: cannot open '" + path.string() + "'");
  if (!append) {
    for (std::size_t c = 0; c < log.columns().size(); ++c) {
      if (c) os << ',';
      os << log.columns()[c];
    }
    os << '\n';
  }
  for (const auto& row : log.rows()) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << ',';
      os << format_metric(row[c]);
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write_metrics: write failed for '" + path.string() + "'");
}

}  // namespace relearn
