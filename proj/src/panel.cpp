#include "ilcast/panel.hpp"

#include "ilcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace ilcast {

namespace {

std::string key_text(int country, YearMonth m) {
    return "(" + std::to_string(country) + ", " + std::to_string(m.year) + ", " +
           std::to_string(m.month) + ")";
}

bool is_outcome(const std::string& name) {
    return name == "irr_entry" || name == "irr_exit" || name == "ilc";
}

} // namespace

Panel Panel::from_records(std::vector<PanelRecord> records, std::map<int, std::string> names) {
    std::set<std::string> cov_names;
    for (const auto& r : records)
        for (const auto& [k, v] : r.covariates) cov_names.insert(k);

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ra = records[a];
        const auto& rb = records[b];
        if (ra.country_id != rb.country_id) return ra.country_id < rb.country_id;
        return ra.date < rb.date;
    });

    Panel p;
    p.names_ = std::move(names);
    p.country_.reserve(records.size());
    for (const auto& name : cov_names) p.covariates_[name].reserve(records.size());

    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& r = records[order[k]];
        if (!r.date.valid()) throw DataError("invalid month in key " + key_text(r.country_id, r.date));
        if (k > 0) {
            const auto& prev = records[order[k - 1]];
            if (prev.country_id == r.country_id && prev.date == r.date)
                throw DataError("duplicate key " + key_text(r.country_id, r.date));
        }
        for (int flag : {r.irr_entry, r.irr_exit, r.ilc})
            if (flag != 0 && flag != 1)
                throw DataError("outcome flag not in {0,1} at " + key_text(r.country_id, r.date));
        if (r.ilc != ((r.irr_entry == 1 || r.irr_exit == 1) ? 1 : 0))
            throw DataError("ilc inconsistent with irr_entry/irr_exit at " +
                            key_text(r.country_id, r.date));
        p.country_.push_back(r.country_id);
        p.month_.push_back(r.date);
        p.entry_.push_back(static_cast<std::int8_t>(r.irr_entry));
        p.exit_.push_back(static_cast<std::int8_t>(r.irr_exit));
        p.ilc_.push_back(static_cast<std::int8_t>(r.ilc));
        for (const auto& name : cov_names) {
            auto it = r.covariates.find(name);
            p.covariates_[name].push_back(it == r.covariates.end() ? std::nullopt : it->second);
        }
    }
    return p;
}

const Column& Panel::covariate(const std::string& name) const {
    auto it = covariates_.find(name);
    if (it == covariates_.end()) throw DataError("unknown covariate '" + name + "'");
    return it->second;
}

Column Panel::variable(const std::string& name) const {
    if (has_covariate(name)) return covariate(name);
    const std::vector<std::int8_t>* src = nullptr;
    if (name == "irr_entry") src = &entry_;
    else if (name == "irr_exit") src = &exit_;
    else if (name == "ilc") src = &ilc_;
    if (!src) throw DataError("unknown variable '" + name + "'");
    Column out(src->size());
    for (std::size_t i = 0; i < src->size(); ++i) out[i] = (*src)[i];
    return out;
}

std::vector<std::string> Panel::covariate_names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : covariates_) out.push_back(k);
    return out;
}

Panel Panel::with_covariate(const std::string& name, Column values) const {
    if (values.size() != size())
        throw DataError("covariate '" + name + "' has " + std::to_string(values.size()) +
                        " values for " + std::to_string(size()) + " rows");
    if (is_outcome(name)) throw DataError("'" + name + "' is reserved for an outcome column");
    Panel out = *this;
    out.covariates_[name] = std::move(values);
    return out;
}

Panel Panel::select(std::span<const std::size_t> rows) const {
    Panel out;
    out.names_ = names_;
    auto pick = [&](const auto& src, auto& dst) {
        dst.reserve(rows.size());
        for (auto r : rows) dst.push_back(src[r]);
    };
    pick(country_, out.country_);
    pick(month_, out.month_);
    pick(entry_, out.entry_);
    pick(exit_, out.exit_);
    pick(ilc_, out.ilc_);
    for (const auto& [name, col] : covariates_) pick(col, out.covariates_[name]);
    return out;
}

std::optional<std::size_t> Panel::find(int country, YearMonth month) const {
    std::size_t lo = 0, hi = size();
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (country_[mid] < country || (country_[mid] == country && month_[mid] < month))
            lo = mid + 1;
        else
            hi = mid;
    }
    if (lo < size() && country_[lo] == country && month_[lo] == month) return lo;
    return std::nullopt;
}

std::vector<int> Panel::countries() const {
    std::vector<int> out;
    for (auto c : country_)
        if (out.empty() || out.back() != c) out.push_back(c);
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> Panel::country_blocks() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= size(); ++i) {
        if (i == size() || country_[i] != country_[begin]) {
            out.emplace_back(begin, i);
            begin = i;
        }
    }
    return out;
}

YearMonth Panel::first_month() const {
    if (empty()) throw DataError("empty panel");
    return *std::min_element(month_.begin(), month_.end());
}

YearMonth Panel::last_month() const {
    if (empty()) throw DataError("empty panel");
    return *std::max_element(month_.begin(), month_.end());
}

std::string Panel::name(int country) const {
    auto it = names_.find(country);
    return it == names_.end() ? std::string() : it->second;
}

std::vector<std::string> Panel::header() const {
    std::vector<std::string> h = {"country_id"};
    if (!names_.empty()) h.push_back("name");
    for (const char* c : {"year", "month", "irr_entry", "irr_exit", "ilc"}) h.push_back(c);
    for (const auto& [k, v] : covariates_) h.push_back(k);
    return h;
}

void Panel::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    csv::write_row(out, header());
    std::vector<std::string> fields;
    for (std::size_t i = 0; i < size(); ++i) {
        fields.clear();
        fields.push_back(std::to_string(country_[i]));
        if (!names_.empty()) fields.push_back(name(country_[i]));
        fields.push_back(std::to_string(month_[i].year));
        fields.push_back(std::to_string(month_[i].month));
        fields.push_back(std::to_string(entry_[i]));
        fields.push_back(std::to_string(exit_[i]));
        fields.push_back(std::to_string(ilc_[i]));
        for (const auto& [k, col] : covariates_) fields.push_back(csv::format_optional(col[i]));
        csv::write_row(out, fields);
    }
}

// ---------------------------------------------------------------------------

Panel ingest_panel(const csv::Table& table, const PanelSchema& schema) {
    constexpr std::string_view ctx = "panel";
    const auto c_country = table.require_column(schema.country_column, ctx);
    std::optional<std::size_t> c_name;
    if (!schema.name_column.empty()) c_name = table.require_column(schema.name_column, ctx);
    std::optional<std::size_t> c_date, c_year, c_month;
    if (!schema.date_column.empty()) {
        c_date = table.require_column(schema.date_column, ctx);
    } else {
        c_year = table.require_column(schema.year_column, ctx);
        c_month = table.require_column(schema.month_column, ctx);
    }
    const auto c_entry = table.require_column(schema.entry_column, ctx);
    const auto c_exit = table.require_column(schema.exit_column, ctx);
    const auto c_ilc = table.column(schema.ilc_column);

    std::vector<std::pair<std::string, std::size_t>> cov_cols;
    if (schema.covariates.empty()) {
        std::set<std::size_t> mapped = {c_country, c_entry, c_exit};
        for (auto c : {c_name, c_date, c_year, c_month, c_ilc})
            if (c) mapped.insert(*c);
        for (std::size_t j = 0; j < table.header.size(); ++j)
            if (!mapped.contains(j)) cov_cols.emplace_back(table.header[j], j);
    } else {
        for (const auto& name : schema.covariates)
            cov_cols.emplace_back(name, table.require_column(name, ctx));
    }

    std::vector<PanelRecord> records;
    records.reserve(table.rows.size());
    std::map<int, std::string> names;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = table.line_numbers[r];
        auto fail = [&](const std::string& what) -> DataError {
            return DataError("panel row " + std::to_string(line) + ": " + what);
        };
        auto integer = [&](std::size_t col, const std::string& label) {
            auto v = csv::parse_long(row[col]);
            if (!v) throw fail("malformed " + label + " '" + row[col] + "'");
            return *v;
        };
        PanelRecord rec;
        rec.country_id = static_cast<int>(integer(c_country, "country id"));
        if (c_date) {
            try {
                rec.date = YearMonth::parse(row[*c_date]);
            } catch (const DataError&) {
                throw fail("malformed date '" + row[*c_date] + "'");
            }
        } else {
            rec.date = {static_cast<int>(integer(*c_year, "year")),
                        static_cast<int>(integer(*c_month, "month"))};
            if (!rec.date.valid()) throw fail("month out of range '" + row[*c_month] + "'");
        }
        rec.irr_entry = static_cast<int>(integer(c_entry, "irr_entry"));
        rec.irr_exit = static_cast<int>(integer(c_exit, "irr_exit"));
        rec.ilc = c_ilc ? static_cast<int>(integer(*c_ilc, "ilc"))
                        : ((rec.irr_entry == 1 || rec.irr_exit == 1) ? 1 : 0);
        for (const auto& [name, col] : cov_cols) {
            const auto& field = row[col];
            if (csv::is_missing_token(field)) {
                rec.covariates[name] = std::nullopt;
            } else {
                auto v = csv::parse_double(field);
                if (!v) throw fail("malformed value '" + field + "' in column '" + name + "'");
                rec.covariates[name] = *v;
            }
        }
        if (c_name) names[rec.country_id] = row[*c_name];
        records.push_back(std::move(rec));
    }
    try {
        return Panel::from_records(std::move(records), std::move(names));
    } catch (const DataError& e) {
        // Name the offending source line for flag inconsistencies.
        std::string msg = e.what();
        if (msg.rfind("ilc inconsistent", 0) == 0 || msg.rfind("outcome flag", 0) == 0) {
            for (std::size_t r = 0; r < table.rows.size(); ++r) {
                const auto& row = table.rows[r];
                auto en = csv::parse_long(row[c_entry]).value_or(0);
                auto ex = csv::parse_long(row[c_exit]).value_or(0);
                long il = c_ilc ? csv::parse_long(row[*c_ilc]).value_or(0) : ((en || ex) ? 1 : 0);
                bool bad = en < 0 || en > 1 || ex < 0 || ex > 1 || il != ((en == 1 || ex == 1) ? 1 : 0);
                if (bad)
                    throw DataError("panel row " + std::to_string(table.line_numbers[r]) + ": " + msg);
            }
        }
        throw;
    }
}

Panel ingest_panel(const std::string& path, const PanelSchema& schema) {
    auto table = csv::read_file(path);
    try {
        return ingest_panel(table, schema);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

Panel shift_covariate(const Panel& panel, const std::string& name, int offset,
                      const std::string& out_name) {
    const auto& src = panel.covariate(name);
    Column out(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
        auto j = panel.find(panel.country(i), panel.month(i) - offset);
        if (j) out[i] = src[*j];
    }
    return panel.with_covariate(out_name, std::move(out));
}

Panel lag_covariate(const Panel& panel, const std::string& name, int k) {
    if (k < 1) throw DataError("lag must be >= 1, got " + std::to_string(k));
    return shift_covariate(panel, name, k, name + ".l" + std::to_string(k));
}

Panel log_transform(const Panel& panel, const std::string& name, LogBase base, double offset,
                    std::string out_name) {
    const auto& src = panel.covariate(name);
    if (out_name.empty())
        out_name = std::string(base == LogBase::Ten ? "log10(" : "log(") + name + "+" +
                   csv::format_double(offset) + ")";
    Column out(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
        if (!src[i]) continue;
        double x = *src[i];
        if (x < 0)
            throw DataError("log_transform: negative value " + csv::format_double(x) + " in '" +
                            name + "' at country " + std::to_string(panel.country(i)) + ", " +
                            panel.month(i).to_string());
        double arg = x + offset;
        if (arg <= 0) throw DataError("log_transform: non-positive argument in '" + name + "'");
        out[i] = base == LogBase::Ten ? std::log10(arg) : std::log(arg);
    }
    return panel.with_covariate(out_name, std::move(out));
}

// ---------------------------------------------------------------------------

Quad quad_of(int cameo_root) {
    if (cameo_root < 1 || cameo_root > 20)
        throw DataError("CAMEO root code out of range 1..20: " + std::to_string(cameo_root));
    if (cameo_root <= 5) return Quad::VerbalCoop;
    if (cameo_root <= 8) return Quad::MaterialCoop;
    if (cameo_root <= 13) return Quad::VerbalConf;
    return Quad::MaterialConf;
}

Sector sector_from_label(std::string_view label) {
    if (label == "GOV") return Sector::GOV;
    if (label == "DIS") return Sector::DIS;
    if (label == "REB") return Sector::REB;
    if (label == "ETH") return Sector::ETH;
    return Sector::Other;
}

Sector parse_direction_sector(std::string_view label) {
    auto s = sector_from_label(label);
    if (s == Sector::Other) throw DataError("unknown actor sector '" + std::string(label) + "'");
    return s;
}

Quad parse_quad(std::string_view label) {
    if (label == "VerbalCoop" || label == "verb.coop") return Quad::VerbalCoop;
    if (label == "MaterialCoop" || label == "matl.coop") return Quad::MaterialCoop;
    if (label == "VerbalConf" || label == "verb.conf") return Quad::VerbalConf;
    if (label == "MaterialConf" || label == "matl.conf") return Quad::MaterialConf;
    throw DataError("unknown quad category '" + std::string(label) + "'");
}

std::string to_string(Sector s) {
    switch (s) {
    case Sector::GOV: return "GOV";
    case Sector::DIS: return "DIS";
    case Sector::REB: return "REB";
    case Sector::ETH: return "ETH";
    case Sector::Other: break;
    }
    return "other";
}

std::string to_string(Quad q) {
    switch (q) {
    case Quad::VerbalCoop: return "VerbalCoop";
    case Quad::MaterialCoop: return "MaterialCoop";
    case Quad::VerbalConf: return "VerbalConf";
    case Quad::MaterialConf: break;
    }
    return "MaterialConf";
}

std::vector<EventRecord> read_events(const csv::Table& table, const EventSchema& schema) {
    constexpr std::string_view ctx = "events";
    const auto c_country = table.require_column(schema.country_column, ctx);
    std::optional<std::size_t> c_date, c_year, c_month;
    if (!schema.date_column.empty()) {
        c_date = table.require_column(schema.date_column, ctx);
    } else {
        c_year = table.require_column(schema.year_column, ctx);
        c_month = table.require_column(schema.month_column, ctx);
    }
    const auto c_src = table.require_column(schema.source_column, ctx);
    const auto c_tgt = table.require_column(schema.target_column, ctx);
    const auto c_root = table.require_column(schema.root_column, ctx);
    const auto c_count = table.require_column(schema.count_column, ctx);

    std::vector<EventRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto fail = [&](const std::string& what) {
            return DataError("events row " + std::to_string(table.line_numbers[r]) + ": " + what);
        };
        auto integer = [&](std::size_t col, const char* label) {
            auto v = csv::parse_long(row[col]);
            if (!v) throw fail(std::string("malformed ") + label + " '" + row[col] + "'");
            return *v;
        };
        EventRecord e;
        e.country_id = static_cast<int>(integer(c_country, "country id"));
        if (c_date) {
            try {
                e.date = YearMonth::parse(row[*c_date]);
            } catch (const DataError&) {
                throw fail("malformed date '" + row[*c_date] + "'");
            }
        } else {
            e.date = {static_cast<int>(integer(*c_year, "year")),
                      static_cast<int>(integer(*c_month, "month"))};
            if (!e.date.valid()) throw fail("month out of range");
        }
        e.source = sector_from_label(row[c_src]);
        e.target = sector_from_label(row[c_tgt]);
        e.cameo_root = static_cast<int>(integer(c_root, "cameo root"));
        if (e.cameo_root < 1 || e.cameo_root > 20)
            throw fail("CAMEO root code out of range 1..20: " + row[c_root]);
        e.count = integer(c_count, "count");
        if (e.count < 0) throw fail("negative event count");
        out.push_back(e);
    }
    return out;
}

std::vector<EventRecord> read_events(const std::string& path, const EventSchema& schema) {
    auto table = csv::read_file(path);
    try {
        return read_events(table, schema);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

std::map<CountryMonth, long> aggregate_events(std::span<const EventRecord> events, Sector source,
                                              Sector target, Quad quad) {
    if (source == Sector::Other || target == Sector::Other)
        throw DataError("event aggregation direction must use GOV/DIS/REB/ETH sectors");
    std::map<CountryMonth, long> out;
    for (const auto& e : events) {
        if (e.source != source || e.target != target) continue;
        if (quad_of(e.cameo_root) != quad) continue;
        out[{e.country_id, e.date}] += e.count;
    }
    return out;
}

Panel with_event_counts(const Panel& panel, const std::map<CountryMonth, long>& counts,
                        const std::string& name) {
    Column out(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
        auto it = counts.find({panel.country(i), panel.month(i)});
        out[i] = it == counts.end() ? 0.0 : static_cast<double>(it->second);
    }
    return panel.with_covariate(name, std::move(out));
}

} // namespace ilcast
