#pragma once

#include "ilcast/calendar.hpp"
#include "ilcast/panel.hpp"

#include <span>
#include <string>
#include <vector>

namespace ilcast {

/// Irregular leadership change (failure) in a country-month.
struct LeaderEvent {
    int country_id = 0;
    YearMonth date;
};

struct HistorySchema {
    std::string country_column = "country_id";
    std::string year_column = "year";
    std::string month_column = "month";
    std::string date_column;
    std::string flag_column = "irr_exit";
};

/// Rows whose flag is 1 become events; other rows are ignored.
std::vector<LeaderEvent> read_history(const csv::Table& table, const HistorySchema& schema);
std::vector<LeaderEvent> read_history(const std::string& path, const HistorySchema& schema);

/// Contiguous at-risk episode. Exactly one of failure, right censoring or
/// state exit terminates it.
struct Spell {
    int country_id = 0;
    YearMonth start;
    YearMonth end;
    bool ended_in_failure = false;
    bool right_censored = false;
    bool state_exit = false;
};

struct DurationRow {
    int country_id = 0;
    YearMonth date;
    int duration = 1;
    int failure = 0;
    int atrisk = 0;
    int cured = 1;
    int t0 = 0;
    int end_spell = 0;
};

struct SpellResult {
    /// Input panel plus duration, failure, atrisk, cured, t.0, end.spell.
    Panel panel;
    /// One entry per panel row, same order.
    std::vector<DurationRow> rows;
    std::vector<Spell> spells;
    std::vector<std::string> warnings;
};

inline constexpr YearMonth kDefaultBackfillStart{1955, 1};
inline const std::vector<std::string> kDurationColumns = {"duration", "failure",  "atrisk",
                                                          "cured",    "t.0",      "end.spell"};

/// Builds duration variables. Counters are seeded from the latest history
/// failure before each country's first panel month (or from backfill_start,
/// where the backfill month itself has duration 1). A failure month ends its
/// spell; the next month starts a new one at duration 1. Failures are the
/// union of history events inside the panel window and panel rows with ilc = 1.
///
/// Throws DataError for a history event outside [backfill_start, panel end] or
/// one that falls on a panel month coded ilc = 0.
SpellResult build_spells(std::span<const LeaderEvent> history, const Panel& panel,
                         YearMonth backfill_start = kDefaultBackfillStart);

/// Re-codes spell membership as if observation stopped at `window_end`: rows
/// after it are dropped and spells still open at `window_end` become right
/// censored (not at risk). duration and t.0 are backward looking and kept.
/// Expects a panel produced by build_spells.
SpellResult recode_window(const Panel& duration_panel, YearMonth window_end);

/// Counts of each (row value, column value) pair over rows where both are present.
struct ContingencyTable {
    std::string row_var;
    std::string col_var;
    std::vector<long> row_levels;
    std::vector<long> col_levels;
    std::vector<std::vector<long>> counts;  ///< [row level][col level]
    long total = 0;

    long at(long row_level, long col_level) const;
};

/// Throws DataError when either variable holds a non-integer value.
ContingencyTable cross_tabulate(const Panel& panel, const std::string& row_var,
                                const std::string& col_var);

} // namespace ilcast
