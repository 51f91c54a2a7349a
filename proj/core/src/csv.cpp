#include "voltreg/csv.hpp"

#include <charconv>
#include <sstream>

#include "voltreg/error.hpp"

namespace voltreg {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::size_t NumericTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return k;
  fail(ErrorCategory::kParse, "CSV column '" + name + "' not found");
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t lead = 0;
    while (lead < cell.size() && cell[lead] == ' ') ++lead;
    cells.push_back(cell.substr(lead));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

NumericTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::kIo, "cannot open " + path.string());
  NumericTable t;
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCategory::kParse, path.string() + ": empty file");
  t.header = split(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != t.header.size())
      fail(ErrorCategory::kParse, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                      std::to_string(t.header.size()) + " cells, got " + std::to_string(cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const std::string& c = cells[k];
      auto res = std::from_chars(c.data(), c.data() + c.size(), row[k]);
      if (res.ec != std::errc{} || res.ptr != c.data() + c.size())
        fail(ErrorCategory::kParse, path.string() + ":" + std::to_string(lineno) + ": bad number '" + c + "' in column " +
                                        t.header[k]);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path), path_(path), width_(header.size()) {
  if (!out_) fail(ErrorCategory::kIo, "cannot write " + path.string());
  for (std::size_t k = 0; k < header.size(); ++k) out_ << (k ? "," : "") << header[k];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  if (values.size() != width_) fail(ErrorCategory::kState, path_.string() + ": row width mismatch");
  for (std::size_t k = 0; k < values.size(); ++k) out_ << (k ? "," : "") << format_double(values[k]);
  out_ << '\n';
}

void CsvWriter::row(const std::string& label, const std::vector<double>& values) {
  if (values.size() + 1 != width_) fail(ErrorCategory::kState, path_.string() + ": row width mismatch");
  out_ << label;
  for (double v : values) out_ << ',' << format_double(v);
  out_ << '\n';
}

}  // namespace voltreg
