#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace stochadj {

/// RFC-4180 table: header row plus string cells. Rows end in CRLF when
/// written; the reader accepts CRLF or LF.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // throws ValidationError when missing
};

// Shortest round-trip decimal form with a '.' separator, locale independent.
std::string format_number(double v);
std::string csv_escape(const std::string& cell);

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header);

  void row(const std::vector<std::string>& cells);
  int columns() const { return columns_; }

 private:
  std::ostream& out_;
  int columns_;
};

CsvTable read_csv(std::istream& in);
double parse_number(const std::string& cell, const std::string& what);

}  // namespace stochadj
