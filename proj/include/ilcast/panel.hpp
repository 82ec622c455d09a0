#pragma once

#include "ilcast/calendar.hpp"
#include "ilcast/csv.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ilcast {

using Column = std::vector<std::optional<double>>;

/// One country-month observation.
struct PanelRecord {
    int country_id = 0;
    YearMonth date;
    int irr_entry = 0;
    int irr_exit = 0;
    int ilc = 0;
    std::map<std::string, std::optional<double>> covariates;
};

/// Column mapping from a source CSV onto the panel fields.
struct PanelSchema {
    std::string country_column = "country_id";
    std::string name_column;  ///< optional country display name
    std::string year_column = "year";
    std::string month_column = "month";
    std::string date_column;  ///< optional "YYYY-MM"; replaces year/month when set
    std::string entry_column = "irr_entry";
    std::string exit_column = "irr_exit";
    std::string ilc_column = "ilc";  ///< derived from entry/exit if absent from the file
    /// Covariate columns to read. Empty means every column not mapped above.
    std::vector<std::string> covariates;
};

/// Country-month panel sorted by (country_id, month), unique on that key.
/// Immutable once built; transforms return new panels.
class Panel {
public:
    Panel() = default;

    /// Validates and sorts. Throws DataError on duplicate keys or an ilc flag
    /// inconsistent with irr_entry/irr_exit.
    static Panel from_records(std::vector<PanelRecord> records,
                              std::map<int, std::string> names = {});

    std::size_t size() const { return country_.size(); }
    bool empty() const { return country_.empty(); }

    int country(std::size_t row) const { return country_[row]; }
    YearMonth month(std::size_t row) const { return month_[row]; }
    int irr_entry(std::size_t row) const { return entry_[row]; }
    int irr_exit(std::size_t row) const { return exit_[row]; }
    int ilc(std::size_t row) const { return ilc_[row]; }

    bool has_covariate(const std::string& name) const { return covariates_.contains(name); }
    /// Throws DataError for an unknown covariate.
    const Column& covariate(const std::string& name) const;
    /// Covariate or one of the outcome columns irr_entry, irr_exit, ilc.
    Column variable(const std::string& name) const;
    std::vector<std::string> covariate_names() const;

    /// Copy with `name` added (or replaced). Column length must equal size().
    Panel with_covariate(const std::string& name, Column values) const;
    /// Copy keeping rows where keep(row) is true.
    template <class Pred>
    Panel filter(Pred keep) const {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < size(); ++i)
            if (keep(i)) rows.push_back(i);
        return select(rows);
    }
    Panel select(std::span<const std::size_t> rows) const;

    /// Row index of (country, month), if present.
    std::optional<std::size_t> find(int country, YearMonth month) const;
    /// Sorted distinct country ids.
    std::vector<int> countries() const;
    /// Half-open [begin, end) row ranges, one per country, in country order.
    std::vector<std::pair<std::size_t, std::size_t>> country_blocks() const;
    YearMonth first_month() const;
    YearMonth last_month() const;

    const std::map<int, std::string>& names() const { return names_; }
    std::string name(int country) const;

    std::vector<std::string> header() const;
    /// Writes the panel as CSV: country_id, [name], year, month, outcomes, covariates.
    void write_csv(const std::string& path) const;

private:
    std::vector<int> country_;
    std::vector<YearMonth> month_;
    std::vector<std::int8_t> entry_, exit_, ilc_;
    std::map<std::string, Column> covariates_;
    std::map<int, std::string> names_;
};

Panel ingest_panel(const csv::Table& table, const PanelSchema& schema);
Panel ingest_panel(const std::string& path, const PanelSchema& schema);

/// Value from `k` calendar months earlier in the same country, stored as
/// `name.l{k}`. Months without an observed predecessor are missing.
Panel lag_covariate(const Panel& panel, const std::string& name, int k);
/// Calendar shift by `offset` months (positive = lag, negative = lead).
Panel shift_covariate(const Panel& panel, const std::string& name, int offset,
                      const std::string& out_name);

enum class LogBase { Ten, E };

/// log_base(x + offset); missing propagates. Throws on x + offset <= 0.
/// Default output name is `log10(name+1)` or `log(name+1)`.
Panel log_transform(const Panel& panel, const std::string& name, LogBase base,
                    double offset = 1.0, std::string out_name = {});

// ---------------------------------------------------------------------------
// Event data

enum class Sector { GOV, DIS, REB, ETH, Other };
enum class Quad { VerbalCoop, MaterialCoop, VerbalConf, MaterialConf };

struct EventRecord {
    int country_id = 0;
    YearMonth date;
    Sector source = Sector::Other;
    Sector target = Sector::Other;
    int cameo_root = 1;
    long count = 0;
};

struct EventSchema {
    std::string country_column = "country_id";
    std::string year_column = "year";
    std::string month_column = "month";
    std::string date_column;
    std::string source_column = "source_sector";
    std::string target_column = "target_sector";
    std::string root_column = "cameo_root";
    std::string count_column = "count";
};

/// Quad category of a CAMEO root code; throws DataError outside 1..20.
Quad quad_of(int cameo_root);
/// Labels other than GOV/DIS/REB/ETH map to Sector::Other.
Sector sector_from_label(std::string_view label);
/// Strict parse for query directions: only GOV/DIS/REB/ETH are accepted.
Sector parse_direction_sector(std::string_view label);
Quad parse_quad(std::string_view label);
std::string to_string(Sector s);
std::string to_string(Quad q);

std::vector<EventRecord> read_events(const csv::Table& table, const EventSchema& schema);
std::vector<EventRecord> read_events(const std::string& path, const EventSchema& schema);

using CountryMonth = std::pair<int, YearMonth>;

/// Per country-month sums of counts whose root falls in `quad` and whose
/// (source, target) equals the direction. Directional: DIS->GOV != GOV->DIS.
std::map<CountryMonth, long> aggregate_events(std::span<const EventRecord> events,
                                              Sector source, Sector target, Quad quad);

/// Adds the counts as a covariate; panel months without events get 0.
Panel with_event_counts(const Panel& panel, const std::map<CountryMonth, long>& counts,
                        const std::string& name);

} // namespace ilcast
