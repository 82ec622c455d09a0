#include "ilcast/spells.hpp"

#include "ilcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace ilcast {

std::vector<LeaderEvent> read_history(const csv::Table& table, const HistorySchema& schema) {
    constexpr std::string_view ctx = "history";
    const auto c_country = table.require_column(schema.country_column, ctx);
    const auto c_flag = table.require_column(schema.flag_column, ctx);
    std::optional<std::size_t> c_date, c_year, c_month;
    if (!schema.date_column.empty()) {
        c_date = table.require_column(schema.date_column, ctx);
    } else {
        c_year = table.require_column(schema.year_column, ctx);
        c_month = table.require_column(schema.month_column, ctx);
    }
    std::vector<LeaderEvent> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto fail = [&](const std::string& what) {
            return DataError("history row " + std::to_string(table.line_numbers[r]) + ": " + what);
        };
        auto flag = csv::parse_long(row[c_flag]);
        if (!flag || (*flag != 0 && *flag != 1)) throw fail("malformed flag '" + row[c_flag] + "'");
        if (*flag == 0) continue;
        auto id = csv::parse_long(row[c_country]);
        if (!id) throw fail("malformed country id '" + row[c_country] + "'");
        LeaderEvent e;
        e.country_id = static_cast<int>(*id);
        if (c_date) {
            try {
                e.date = YearMonth::parse(row[*c_date]);
            } catch (const DataError&) {
                throw fail("malformed date '" + row[*c_date] + "'");
            }
        } else {
            auto y = csv::parse_long(row[*c_year]);
            auto m = csv::parse_long(row[*c_month]);
            if (!y || !m || *m < 1 || *m > 12) throw fail("malformed year/month");
            e.date = {static_cast<int>(*y), static_cast<int>(*m)};
        }
        out.push_back(e);
    }
    return out;
}

std::vector<LeaderEvent> read_history(const std::string& path, const HistorySchema& schema) {
    auto table = csv::read_file(path);
    try {
        return read_history(table, schema);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

namespace {

// Splits each country's rows at failure months and codes the spell fields.
// `window_end` is the last observed month of the whole panel.
void code_spells(const Panel& panel, YearMonth window_end, std::vector<DurationRow>& rows,
                 std::vector<Spell>& spells) {
    for (auto [begin, end] : panel.country_blocks()) {
        std::size_t spell_begin = begin;
        for (std::size_t i = begin; i < end; ++i) {
            const bool last_row = i + 1 == end;
            if (rows[i].failure == 0 && !last_row) continue;
            Spell s;
            s.country_id = panel.country(i);
            s.start = panel.month(spell_begin);
            s.end = panel.month(i);
            s.ended_in_failure = rows[i].failure == 1;
            s.right_censored = !s.ended_in_failure && s.end == window_end;
            s.state_exit = !s.ended_in_failure && !s.right_censored;
            for (std::size_t j = spell_begin; j <= i; ++j) {
                rows[j].atrisk = s.ended_in_failure ? 1 : 0;
                rows[j].cured = 1 - rows[j].atrisk;
                rows[j].end_spell = j == i ? 1 : 0;
            }
            spells.push_back(s);
            spell_begin = i + 1;
        }
    }
}

Panel attach_columns(const Panel& panel, const std::vector<DurationRow>& rows) {
    Column duration(rows.size()), failure(rows.size()), atrisk(rows.size()), cured(rows.size()),
        t0(rows.size()), end_spell(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        duration[i] = rows[i].duration;
        failure[i] = rows[i].failure;
        atrisk[i] = rows[i].atrisk;
        cured[i] = rows[i].cured;
        t0[i] = rows[i].t0;
        end_spell[i] = rows[i].end_spell;
    }
    return panel.with_covariate("duration", std::move(duration))
        .with_covariate("failure", std::move(failure))
        .with_covariate("atrisk", std::move(atrisk))
        .with_covariate("cured", std::move(cured))
        .with_covariate("t.0", std::move(t0))
        .with_covariate("end.spell", std::move(end_spell));
}

} // namespace

SpellResult build_spells(std::span<const LeaderEvent> history, const Panel& panel,
                         YearMonth backfill_start) {
    if (panel.empty()) throw DataError("build_spells: empty panel");
    const YearMonth window_end = panel.last_month();
    SpellResult result;

    std::map<int, std::set<YearMonth>> failures;
    for (const auto& e : history) {
        if (e.date < backfill_start || e.date > window_end)
            throw DataError("history event for country " + std::to_string(e.country_id) + " at " +
                            e.date.to_string() + " lies outside [" + backfill_start.to_string() +
                            ", " + window_end.to_string() + "]");
        if (auto row = panel.find(e.country_id, e.date); row && panel.ilc(*row) == 0)
            throw DataError("history event for country " + std::to_string(e.country_id) + " at " +
                            e.date.to_string() + " conflicts with panel ilc = 0");
        failures[e.country_id].insert(e.date);
    }

    result.rows.resize(panel.size());
    for (auto [begin, end] : panel.country_blocks()) {
        const int country = panel.country(begin);
        auto& fails = failures[country];
        if (fails.empty())
            result.warnings.push_back("country " + std::to_string(country) +
                                      " has no leader-change history; counter seeded at " +
                                      backfill_start.to_string());
        for (std::size_t i = begin; i < end; ++i)
            if (panel.ilc(i) == 1) fails.insert(panel.month(i));

        for (std::size_t i = begin; i < end; ++i) {
            if (i > begin && panel.month(i) - panel.month(i - 1) != 1)
                result.warnings.push_back("country " + std::to_string(country) + " has a gap before " +
                                          panel.month(i).to_string());
            const YearMonth m = panel.month(i);
            if (m < backfill_start)
                throw DataError("panel month " + m.to_string() + " precedes backfill start " +
                                backfill_start.to_string());
            // Latest failure strictly before this month.
            auto it = fails.lower_bound(m);
            long duration = 0;
            if (it == fails.begin()) {
                duration = (m - backfill_start) + 1;
            } else {
                duration = m - *std::prev(it);
            }
            auto& row = result.rows[i];
            row.country_id = country;
            row.date = m;
            row.duration = static_cast<int>(duration);
            row.t0 = row.duration - 1;
            row.failure = fails.contains(m) ? 1 : 0;
        }
    }
    code_spells(panel, window_end, result.rows, result.spells);
    result.panel = attach_columns(panel, result.rows);
    return result;
}

SpellResult recode_window(const Panel& duration_panel, YearMonth window_end) {
    Panel panel = duration_panel.filter([&](std::size_t i) { return duration_panel.month(i) <= window_end; });
    if (panel.empty()) throw DataError("recode_window: no rows at or before " + window_end.to_string());
    const auto& duration = panel.covariate("duration");
    const auto& failure = panel.covariate("failure");
    SpellResult result;
    result.rows.resize(panel.size());
    for (std::size_t i = 0; i < panel.size(); ++i) {
        if (!duration[i] || !failure[i])
            throw DataError("recode_window: missing duration variables at row " + std::to_string(i));
        auto& row = result.rows[i];
        row.country_id = panel.country(i);
        row.date = panel.month(i);
        row.duration = static_cast<int>(*duration[i]);
        row.t0 = row.duration - 1;
        row.failure = static_cast<int>(*failure[i]);
    }
    code_spells(panel, panel.last_month(), result.rows, result.spells);
    result.panel = attach_columns(panel, result.rows);
    return result;
}

long ContingencyTable::at(long row_level, long col_level) const {
    auto r = std::find(row_levels.begin(), row_levels.end(), row_level);
    auto c = std::find(col_levels.begin(), col_levels.end(), col_level);
    if (r == row_levels.end() || c == col_levels.end()) return 0;
    return counts[r - row_levels.begin()][c - col_levels.begin()];
}

ContingencyTable cross_tabulate(const Panel& panel, const std::string& row_var,
                                const std::string& col_var) {
    const Column rows = panel.variable(row_var);
    const Column cols = panel.variable(col_var);
    auto level = [](double v, const std::string& name) {
        if (std::floor(v) != v) throw DataError("cross_tabulate: '" + name + "' is not discrete");
        return static_cast<long>(v);
    };
    std::map<std::pair<long, long>, long> cells;
    std::set<long> rl, cl;
    ContingencyTable t;
    t.row_var = row_var;
    t.col_var = col_var;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        if (!rows[i] || !cols[i]) continue;
        long r = level(*rows[i], row_var);
        long c = level(*cols[i], col_var);
        ++cells[{r, c}];
        rl.insert(r);
        cl.insert(c);
        ++t.total;
    }
    t.row_levels.assign(rl.begin(), rl.end());
    t.col_levels.assign(cl.begin(), cl.end());
    t.counts.assign(t.row_levels.size(), std::vector<long>(t.col_levels.size(), 0));
    for (const auto& [key, n] : cells) {
        auto r = std::lower_bound(t.row_levels.begin(), t.row_levels.end(), key.first) - t.row_levels.begin();
        auto c = std::lower_bound(t.col_levels.begin(), t.col_levels.end(), key.second) - t.col_levels.begin();
        t.counts[r][c] = n;
    }
    return t;
}

} // namespace ilcast
