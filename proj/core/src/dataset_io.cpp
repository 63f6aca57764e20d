#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>

#include "pvcal/csv.hpp"
#include "pvcal/error.hpp"
#include "pvcal/models.hpp"

namespace pvcal {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out = s.substr(b, e - b + 1);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(ErrorKind::io, "csv: line " + std::to_string(lineno) + " has " + std::to_string(fields.size()) +
                                     " fields, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) throw Error(ErrorKind::io, "csv: empty input");
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return read_csv(in);
}

std::optional<double> parse_number(const std::string& field) {
  if (field.empty() || field == "NA" || field == "NaN" || field == "nan") return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end == field.c_str() || *end != '\0' || errno == ERANGE) {
    throw Error(ErrorKind::io, "csv: not a number: '" + field + "'");
  }
  return v;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

DataSet read_dataset_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  const auto ycol = table.column("y");
  if (!ycol) throw Error(ErrorKind::io, "dataset: missing required column 'y'");
  const bool has_intercept = table.column("intercept").has_value();

  DataSet data;
  if (!has_intercept) data.columns.push_back({"intercept", false, std::nullopt});
  std::vector<std::size_t> covariates;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == *ycol) continue;
    covariates.push_back(c);
    ColumnMeta meta;
    meta.name = table.header[c];
    meta.genetic = meta.name.rfind("snp", 0) == 0;
    data.columns.push_back(meta);
  }

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto p = static_cast<Eigen::Index>(data.columns.size());
  data.y.resize(n);
  data.X.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const auto yv = parse_number(row[*ycol]);
    if (!yv) throw Error(ErrorKind::domain, "dataset: missing response on data row " + std::to_string(i + 1));
    data.y[i] = *yv;
    Eigen::Index c = 0;
    if (!has_intercept) data.X(i, c++) = 1.0;
    for (const auto col : covariates) {
      const auto v = parse_number(row[col]);
      if (!v) {
        throw Error(ErrorKind::domain, "dataset: missing value in column '" + table.header[col] + "' on data row " +
                                           std::to_string(i + 1));
      }
      data.X(i, c++) = *v;
    }
  }
  for (Eigen::Index c = 0; c < p; ++c) {
    auto& meta = data.columns[static_cast<std::size_t>(c)];
    if (meta.genetic && n > 0) meta.maf = data.X.col(c).mean() / 2.0;
  }
  return data;
}

DataSet read_dataset_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path);
  return read_dataset_csv(in);
}

}  // namespace pvcal
