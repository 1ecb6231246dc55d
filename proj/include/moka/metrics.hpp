#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace moka {

struct BoundReport;

// Float cells use 17 significant digits so values round-trip exactly.
std::string format_f64(double value);

// Fixed-schema CSV: header written on construction, every row must supply
// exactly one cell per column.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::vector<std::string> columns);

  void row(const std::vector<std::string>& cells);

  static std::string cell(double value) { return format_f64(value); }
  static std::string cell(std::int64_t value) { return std::to_string(value); }
  static std::string cell(int value) { return std::to_string(value); }
  static std::string cell(const std::string& value) { return value; }

 private:
  std::ostream& out_;
  std::size_t column_count_;
};

void write_bound_report_json(std::ostream& out, const BoundReport& report);

}  // namespace moka
