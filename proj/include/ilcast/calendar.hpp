#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace ilcast {

/// A calendar month. Ordering and arithmetic are on the absolute month index.
struct YearMonth {
    int year = 0;
    int month = 1;

    constexpr YearMonth() = default;
    constexpr YearMonth(int y, int m) : year(y), month(m) {}

    static constexpr YearMonth from_index(long idx) {
        long y = idx >= 0 ? idx / 12 : -((-idx + 11) / 12);
        return {static_cast<int>(y), static_cast<int>(idx - y * 12) + 1};
    }

    constexpr long index() const { return static_cast<long>(year) * 12 + (month - 1); }

    constexpr YearMonth operator+(long months) const { return from_index(index() + months); }
    constexpr YearMonth operator-(long months) const { return from_index(index() - months); }
    constexpr long operator-(const YearMonth& other) const { return index() - other.index(); }

    constexpr bool operator==(const YearMonth&) const = default;
    constexpr auto operator<=>(const YearMonth& o) const { return index() <=> o.index(); }

    constexpr bool valid() const { return month >= 1 && month <= 12; }

    /// Parses "YYYY-MM" (also accepts "YYYY-M" and "YYYY/MM").
    static YearMonth parse(std::string_view text);
    std::string to_string() const;
};

} // namespace ilcast
