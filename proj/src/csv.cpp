#include "mmdci/csv.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mmdci {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_cell(const std::string& cell, const std::string& name,
                  std::size_t row, std::size_t col) {
  auto fail = [&](const std::string& why) {
    throw InputError(name + ": row " + std::to_string(row) + ", column " +
                     std::to_string(col + 1) + ": " + why);
  };
  if (cell.empty()) fail("empty cell");
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') fail("not a number: '" + cell + "'");
  if (!std::isfinite(v)) fail("non-finite value");
  return v;
}

}  // namespace

CsvTable read_csv(std::istream& is, const std::string& name) {
  std::string line;
  if (!std::getline(is, line))
    throw InputError(name + ": empty file (header row required)");
  CsvTable table;
  table.header = split_line(line);
  const std::size_t ncol = table.header.size();
  if (ncol == 0 || (ncol == 1 && table.header[0].empty()))
    throw InputError(name + ": empty header row");

  std::vector<double> data;
  std::size_t nrow = 0;
  while (std::getline(is, line)) {
    if (line.empty() && is.peek() == std::char_traits<char>::eof()) break;
    const auto cells = split_line(line);
    ++nrow;
    if (cells.size() != ncol)
      throw InputError(name + ": row " + std::to_string(nrow) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(ncol));
    for (std::size_t c = 0; c < ncol; ++c)
      data.push_back(parse_cell(cells[c], name, nrow, c));
  }
  if (nrow == 0) throw InputError(name + ": no data rows");
  table.values.resize(static_cast<Index>(nrow), static_cast<Index>(ncol));
  for (std::size_t r = 0; r < nrow; ++r)
    for (std::size_t c = 0; c < ncol; ++c)
      table.values(static_cast<Index>(r), static_cast<Index>(c)) =
          data[r * ncol + c];
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open file: " + path);
  return read_csv(is, path);
}

void write_csv(std::ostream& os, const Matrix& values,
               const std::vector<std::string>& header) {
  if (static_cast<Index>(header.size()) != values.cols())
    throw std::invalid_argument("write_csv: header width mismatch");
  for (std::size_t c = 0; c < header.size(); ++c)
    os << (c == 0 ? "" : ",") << header[c];
  os << "\n";
  os.precision(17);
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c)
      os << (c == 0 ? "" : ",") << values(r, c);
    os << "\n";
  }
}

}  // namespace mmdci
