#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mmdci/types.hpp"

namespace mmdci {

/// Strict numeric CSV: comma-separated, mandatory header row, decimal
/// point, UTF-8, no quoting. Ragged rows, empty cells, and non-numeric or
/// non-finite values raise InputError with row/column diagnostics.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

CsvTable read_csv(std::istream& is, const std::string& name);
CsvTable read_csv_file(const std::string& path);

/// Writes with 17 significant digits so values round-trip exactly.
void write_csv(std::ostream& os, const Matrix& values,
               const std::vector<std::string>& header);

}  // namespace mmdci
