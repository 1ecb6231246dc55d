#include "moka/metrics.hpp"

#include <cstdio>
#include <stdexcept>

#include "moka/trainer.hpp"

namespace moka {

std::string format_f64(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(std::ostream& out, std::vector<std::string> columns)
    : out_(out), column_count_(columns.size()) {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out_ << ',';
    out_ << columns[i];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != column_count_) {
    throw std::logic_error("CsvWriter: row has " + std::to_string(cells.size()) +
                           " cells for " + std::to_string(column_count_) + " columns");
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

void write_bound_report_json(std::ostream& out, const BoundReport& report) {
  out << "{\n";
  out << "  \"gap\": " << format_f64(report.gap) << ",\n";
  out << "  \"L\": " << format_f64(report.smoothness) << ",\n";
  out << "  \"G\": " << format_f64(report.grad_bound) << ",\n";
  out << "  \"eta\": " << format_f64(report.eta) << ",\n";
  out << "  \"T\": " << report.steps << ",\n";
  out << "  \"bound\": " << format_f64(report.bound) << ",\n";
  out << "  \"measured_avg\": " << format_f64(report.measured_avg) << ",\n";
  out << "  \"eta_star\": " << format_f64(report.eta_star) << "\n";
  out << "}\n";
}

}  // namespace moka
