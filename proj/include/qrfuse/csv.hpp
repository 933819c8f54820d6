#pragma once

#include "qrfuse/core.hpp"
#include "qrfuse/forecast.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qrfuse {

/// Raw comma-separated table: header row plus string cells. Handles quoted
/// fields with doubled-quote escapes; decimal separator is '.'.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw DataError("csv: no column named '" + name + "'");
    return static_cast<int>(it - header.begin());
  }
};

namespace csv_detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

inline bool parse_double(const std::string& s, double* out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  if (begin == end) return false;
  const auto res = std::from_chars(begin, end, *out);
  return res.ec == std::errc{} && res.ptr == end;
}

}  // namespace csv_detail

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw DataError("csv: empty input");
  table.header = csv_detail::split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = csv_detail::split_line(line);
    if (cells.size() != table.header.size())
      throw DataError("csv: row " + std::to_string(table.rows.size() + 2) +
                      " has " + std::to_string(cells.size()) +
                      " fields, expected " + std::to_string(table.header.size()));
    table.rows.push_back(std::move(cells));
  }
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in);
}

/// Builds a Dataset from a parsed table: one column is the response, the
/// rest are covariates unless excluded. Rows with missing or non-numeric
/// values are rejected with their row numbers (header is row 1).
inline std::pair<Dataset, std::vector<std::string>> dataset_from_csv(
    const CsvTable& table, const std::string& response,
    const std::vector<std::string>& exclude = {}) {
  const int y_col = table.column(response);
  std::vector<int> x_cols;
  std::vector<std::string> x_names;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (static_cast<int>(j) == y_col) continue;
    if (std::find(exclude.begin(), exclude.end(), table.header[j]) != exclude.end())
      continue;
    x_cols.push_back(static_cast<int>(j));
    x_names.push_back(table.header[j]);
  }
  const Eigen::Index t_count = static_cast<Eigen::Index>(table.rows.size());
  if (t_count == 0) throw DataError("csv: no data rows");
  Eigen::MatrixXd x(t_count, static_cast<Eigen::Index>(x_cols.size()));
  Eigen::VectorXd y(t_count);
  std::vector<std::string> bad_rows;
  for (Eigen::Index t = 0; t < t_count; ++t) {
    const auto& cells = table.rows[static_cast<std::size_t>(t)];
    bool ok = csv_detail::parse_double(cells[static_cast<std::size_t>(y_col)], &y(t));
    for (std::size_t j = 0; ok && j < x_cols.size(); ++j)
      ok = csv_detail::parse_double(cells[static_cast<std::size_t>(x_cols[j])],
                                    &x(t, static_cast<Eigen::Index>(j)));
    if (!ok) bad_rows.push_back(std::to_string(t + 2));
  }
  if (!bad_rows.empty()) {
    std::string msg = "csv: missing or non-numeric values in row(s) ";
    for (std::size_t i = 0; i < bad_rows.size(); ++i) {
      if (i) msg += ", ";
      msg += bad_rows[i];
      if (i == 9 && bad_rows.size() > 10) {
        msg += ", ... (" + std::to_string(bad_rows.size()) + " total)";
        break;
      }
    }
    throw DataError(msg);
  }
  return {Dataset(std::move(x), std::move(y)), std::move(x_names)};
}

/// Reads a dated series for forecasting: the date column is kept as labels,
/// the response and remaining numeric columns form the table.
inline SeriesTable series_from_csv(const CsvTable& table,
                                   const std::string& date_col,
                                   const std::string& response,
                                   const std::vector<std::string>& exclude = {}) {
  std::vector<std::string> drop = exclude;
  drop.push_back(date_col);
  auto [ds, names] = dataset_from_csv(table, response, drop);
  SeriesTable out;
  out.x = ds.x();
  out.y = ds.y();
  out.x_names = std::move(names);
  out.y_name = response;
  const int d_col = table.column(date_col);
  out.dates.reserve(table.rows.size());
  for (const auto& row : table.rows) out.dates.push_back(row[static_cast<std::size_t>(d_col)]);
  return out;
}

}  // namespace qrfuse
