#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kquad {

/// One schema serves every experiment artifact; inapplicable fields stay
/// empty. wall_millis is populated only by the benchmark command so that
/// the other outputs are byte-identical across reruns.
inline constexpr const char* kCsvHeader =
    "method,seed,n,mmd_uniform,mmd_bq,weight_sum,weight_min,weight_max,mean_abs_err,bound,"
    "wall_millis";

struct CsvRow {
  std::string method;
  std::optional<std::uint64_t> seed;
  int n = 0;
  std::optional<double> mmd_uniform;
  std::optional<double> mmd_bq;
  std::optional<double> weight_sum;
  std::optional<double> weight_min;
  std::optional<double> weight_max;
  std::optional<double> mean_abs_err;
  std::optional<double> bound;
  std::optional<double> wall_millis;
};

namespace detail {

/// Shortest exact decimal round trip.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string format_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

inline std::optional<double> parse_field(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw std::invalid_argument("CSV: bad numeric field '" + s + "'");
  }
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

/// Rows are sorted by (method, seed, n) before writing, so files come out
/// identical regardless of how the computation was scheduled.
inline void write_csv(const std::filesystem::path& path, std::vector<CsvRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const CsvRow& a, const CsvRow& b) {
    if (a.method != b.method) return a.method < b.method;
    const std::uint64_t sa = a.seed.value_or(0), sb = b.seed.value_or(0);
    if (sa != sb) return sa < sb;
    return a.n < b.n;
  });
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write CSV: " + path.string());
  out << kCsvHeader << "\n";
  for (const auto& r : rows) {
    out << r.method << ',' << (r.seed ? std::to_string(*r.seed) : std::string()) << ',' << r.n
        << ',' << detail::format_field(r.mmd_uniform) << ',' << detail::format_field(r.mmd_bq)
        << ',' << detail::format_field(r.weight_sum) << ','
        << detail::format_field(r.weight_min) << ',' << detail::format_field(r.weight_max)
        << ',' << detail::format_field(r.mean_abs_err) << ',' << detail::format_field(r.bound)
        << ',' << detail::format_field(r.wall_millis) << "\n";
  }
}

inline std::vector<CsvRow> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("CSV is empty: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) {
    throw std::invalid_argument("CSV header mismatch in " + path.string());
  }
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != 11) {
      throw std::invalid_argument("CSV: expected 11 fields, got " +
                                  std::to_string(fields.size()));
    }
    CsvRow r;
    r.method = fields[0];
    if (!fields[1].empty()) r.seed = std::strtoull(fields[1].c_str(), nullptr, 10);
    r.n = std::atoi(fields[2].c_str());
    r.mmd_uniform = detail::parse_field(fields[3]);
    r.mmd_bq = detail::parse_field(fields[4]);
    r.weight_sum = detail::parse_field(fields[5]);
    r.weight_min = detail::parse_field(fields[6]);
    r.weight_max = detail::parse_field(fields[7]);
    r.mean_abs_err = detail::parse_field(fields[8]);
    r.bound = detail::parse_field(fields[9]);
    r.wall_millis = detail::parse_field(fields[10]);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace kquad
