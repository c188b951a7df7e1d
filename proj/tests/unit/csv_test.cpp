#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <gtest/gtest.h>

#include "stochadj/csv.hpp"
#include "stochadj/error.hpp"

namespace stochadj {
namespace {

TEST(Csv, WriterUsesCrlfAndEscapes) {
  std::ostringstream out;
  CsvWriter w(out, {"name", "value"});
  w.row({"plain", "1"});
  w.row({"has,comma", "say \"hi\""});
  EXPECT_EQ(out.str(), "name,value\r\nplain,1\r\n\"has,comma\",\"say \"\"hi\"\"\"\r\n");
  EXPECT_THROW(w.row({"short"}), std::logic_error);
}

TEST(Csv, RoundTrip) {
  std::stringstream io;
  {
    CsvWriter w(io, {"a", "b"});
    w.row({"x\ny", format_number(0.1)});
    w.row({"", format_number(-2.5e-300)});
  }
  const CsvTable t = read_csv(io);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "x\ny");
  EXPECT_EQ(parse_number(t.rows[0][1], "b"), 0.1);
  EXPECT_EQ(parse_number(t.rows[1][1], "b"), -2.5e-300);
  EXPECT_EQ(t.column("b"), 1);
  EXPECT_THROW(t.column("c"), ValidationError);
}

TEST(Csv, ReaderAcceptsLf) {
  std::istringstream in("a,b\n1,2\n3,4\n");
  const CsvTable t = read_csv(in);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "4");
}

TEST(Csv, ReaderRejectsRaggedRows) {
  std::istringstream in("a,b\n1\n");
  EXPECT_THROW(read_csv(in), ValidationError);
}

TEST(Csv, NumbersRoundTripExactly) {
  for (double v : {0.0, 1.0 / 3.0, -1e-17, 6.02214076e23, std::nextafter(1.0, 2.0)}) {
    EXPECT_EQ(parse_number(format_number(v), "v"), v) << format_number(v);
  }
  EXPECT_EQ(format_number(0.5), "0.5");
  EXPECT_TRUE(std::isnan(parse_number(format_number(std::numeric_limits<double>::quiet_NaN()), "v")));
  EXPECT_THROW(parse_number("1.5x", "v"), ValidationError);
}

}  // namespace
}  // namespace stochadj
