#include "ilcast/calendar.hpp"

#include "ilcast/error.hpp"

#include <charconv>
#include <cstdio>

namespace ilcast {

YearMonth YearMonth::parse(std::string_view text) {
    auto sep = text.find_first_of("-/");
    if (sep == std::string_view::npos) throw DataError("bad year-month '" + std::string(text) + "'");
    int y = 0, m = 0;
    auto ys = text.substr(0, sep);
    auto ms = text.substr(sep + 1);
    auto r1 = std::from_chars(ys.data(), ys.data() + ys.size(), y);
    auto r2 = std::from_chars(ms.data(), ms.data() + ms.size(), m);
    if (r1.ec != std::errc{} || r1.ptr != ys.data() + ys.size() || r2.ec != std::errc{} ||
        r2.ptr != ms.data() + ms.size() || m < 1 || m > 12)
        throw DataError("bad year-month '" + std::string(text) + "'");
    return {y, m};
}

std::string YearMonth::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
    return buf;
}

} // namespace ilcast
