#include "ilcast/csv.hpp"

#include "ilcast/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace ilcast::csv {

std::optional<std::size_t> Table::column(std::string_view name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
}

std::size_t Table::require_column(std::string_view name, std::string_view context) const {
    if (auto c = column(name)) return *c;
    throw DataError(std::string(context) + ": missing column '" + std::string(name) + "'");
}

Table parse(std::string_view text) {
    Table table;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;
    std::size_t record_line = 1;
    bool header_done = false;

    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
        // Skip blank lines.
        if (record.size() == 1 && record[0].empty()) {
            record.clear();
            return;
        }
        if (!header_done) {
            table.header = std::move(record);
            header_done = true;
        } else {
            if (record.size() != table.header.size())
                throw DataError("row " + std::to_string(record_line) + ": expected " +
                                std::to_string(table.header.size()) + " fields, got " +
                                std::to_string(record.size()));
            table.rows.push_back(std::move(record));
            table.line_numbers.push_back(record_line);
        }
        record.clear();
    };

    std::size_t i = 0;
    // UTF-8 byte order mark.
    if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (field_started && !field.empty())
                throw DataError("row " + std::to_string(line) + ": stray quote in unquoted field");
            in_quotes = true;
            field_started = true;
            break;
        case ',':
            record.push_back(std::move(field));
            field.clear();
            field_started = false;
            break;
        case '\r':
            break;
        case '\n':
            end_record();
            ++line;
            record_line = line;
            break;
        default:
            field.push_back(c);
            field_started = true;
        }
    }
    if (in_quotes) throw DataError("row " + std::to_string(record_line) + ": unterminated quote");
    if (field_started || !field.empty() || !record.empty()) end_record();
    if (!header_done) throw DataError("empty CSV: no header row");
    return table;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse(ss.str());
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

std::string format_double(double value) {
    if (std::isnan(value)) return "NaN";
    if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
    std::array<char, 32> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

std::string format_optional(const std::optional<double>& value) {
    return value ? format_double(*value) : std::string();
}

bool is_missing_token(std::string_view field) {
    return field.empty() || field == "NA" || field == "NaN" || field == "nan" || field == ".";
}

namespace {
std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}
} // namespace

std::optional<double> parse_double(std::string_view field) {
    field = trim(field);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double v = 0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || res.ec != std::errc{} || res.ptr != field.data() + field.size())
        return std::nullopt;
    return v;
}

std::optional<long> parse_long(std::string_view field) {
    field = trim(field);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    long v = 0;
    auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
        // Accept integral floating text such as "3.0".
        auto d = parse_double(field);
        if (d && std::floor(*d) == *d && std::abs(*d) < 1e15) return static_cast<long>(*d);
        return std::nullopt;
    }
    return v;
}

} // namespace ilcast::csv
