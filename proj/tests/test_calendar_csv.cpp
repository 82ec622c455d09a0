#include "ilcast/calendar.hpp"
#include "ilcast/csv.hpp"
#include "ilcast/error.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace ilcast;

TEST_CASE("year-month arithmetic") {
    const YearMonth m{2001, 3};
    CHECK((m + 10) == YearMonth{2002, 1});
    CHECK((m - 3) == YearMonth{2000, 12});
    CHECK(YearMonth{2001, 3} - YearMonth{1955, 1} == 554);
    CHECK(YearMonth::from_index(m.index()) == m);
    CHECK(YearMonth{1999, 12} < YearMonth{2000, 1});
    CHECK(YearMonth{2014, 3}.to_string() == "2014-03");
}

TEST_CASE("year-month parsing") {
    CHECK(YearMonth::parse("2006-09") == YearMonth{2006, 9});
    CHECK(YearMonth::parse("2006/9") == YearMonth{2006, 9});
    CHECK_THROWS_AS(YearMonth::parse("2006-13"), DataError);
    CHECK_THROWS_AS(YearMonth::parse("June 2006"), DataError);
}

TEST_CASE("csv parsing handles quotes, CRLF, BOM and blank lines") {
    const auto t = csv::parse("\xEF\xBB\xBF" "a,b,c\r\n1,\"x, y\",\"he said \"\"hi\"\"\"\r\n\r\n2,,3\n");
    REQUIRE(t.header == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[0][1] == "x, y");
    CHECK(t.rows[0][2] == "he said \"hi\"");
    CHECK(t.rows[1][1].empty());
    CHECK(t.line_numbers[1] == 4);
    CHECK(t.column("b") == 1);
    CHECK_FALSE(t.column("z").has_value());
}

TEST_CASE("csv rejects ragged rows with the line number") {
    try {
        csv::parse("a,b\n1,2\n3\n");
        FAIL("expected an error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
}

TEST_CASE("csv escape and write round trip") {
    CHECK(csv::escape("plain") == "plain");
    CHECK(csv::escape("a,b") == "\"a,b\"");
    CHECK(csv::escape("q\"") == "\"q\"\"\"");
}

TEST_CASE("double formatting round-trips exactly") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
        const auto back = csv::parse_double(csv::format_double(v));
        REQUIRE(back.has_value());
        CHECK(*back == v);
    }
    CHECK(csv::format_optional(std::nullopt).empty());
    CHECK(csv::format_double(std::numeric_limits<double>::quiet_NaN()) == "NaN");
}

TEST_CASE("missing tokens and integer parsing") {
    for (const char* tok : {"", "NA", "NaN", "nan", "."}) CHECK(csv::is_missing_token(tok));
    CHECK_FALSE(csv::parse_double("NA").has_value());
    CHECK(csv::parse_long("3.0") == 3L);
    CHECK_FALSE(csv::parse_long("3.5").has_value());
}
