#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace voltreg {

/// Numeric CSV with a single header row.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Column position by name; throws Error(kParse) when missing.
  std::size_t column(const std::string& name) const;
};

NumericTable read_numeric_csv(const std::filesystem::path& path);

/// Writes doubles with round-trip precision so that re-reading is bit-exact.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);

  void row(const std::vector<double>& values);
  /// Leading text cell followed by numbers.
  void row(const std::string& label, const std::vector<double>& values);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t width_;
};

std::string format_double(double x);

}  // namespace voltreg
