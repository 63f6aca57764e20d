#ifndef PVCAL_CSV_HPP
#define PVCAL_CSV_HPP

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pvcal {

/// Plain comma-separated table, header first. No quoting support beyond
/// stripping surrounding double quotes from a field.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Parses a numeric field; empty, NA and NaN give nullopt.
std::optional<double> parse_number(const std::string& field);

/// Shortest-round-trip-safe rendering (%.17g); NaN renders as NA.
std::string format_number(double x);

}  // namespace pvcal

#endif  // PVCAL_CSV_HPP
