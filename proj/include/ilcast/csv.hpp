#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ilcast::csv {

/// Parsed CSV with a header row. Fields are kept as raw strings.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    /// 1-based physical line number of each data row, for error messages.
    std::vector<std::size_t> line_numbers;

    /// Column index by name, or nullopt.
    std::optional<std::size_t> column(std::string_view name) const;
    /// Column index by name; throws DataError naming the file context if absent.
    std::size_t require_column(std::string_view name, std::string_view context) const;
};

/// RFC-4180 parsing: quoted fields, doubled quotes, embedded separators and newlines.
Table parse(std::string_view text);
Table read_file(const std::string& path);

/// Quotes a field only when it contains a separator, quote or line break.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);
/// Empty string for a missing value.
std::string format_optional(const std::optional<double>& value);

/// True for the missing-value tokens "", "NA", "NaN", "nan", ".".
bool is_missing_token(std::string_view field);
/// Strict numeric parse of a whole field; nullopt if not a number.
std::optional<double> parse_double(std::string_view field);
std::optional<long> parse_long(std::string_view field);

} // namespace ilcast::csv
