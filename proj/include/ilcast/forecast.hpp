#pragma once

#include "ilcast/calendar.hpp"
#include "ilcast/ebma.hpp"
#include "ilcast/panel.hpp"
#include "ilcast/spdur.hpp"

#include <span>
#include <string>
#include <vector>

namespace ilcast::forecast {

struct ForecastEntry {
    int country_id = 0;
    std::string name;
    YearMonth first_month;
    int horizon = 0;
    double p_window = 0;
    std::vector<double> monthly;  ///< conditional hazard for months 1..horizon
};

struct Exclusion {
    int country_id = 0;
    std::string reason;
};

struct ForecastResult {
    YearMonth last_observed;
    int horizon = 0;
    std::vector<ForecastEntry> entries;  ///< in country_id order
    std::vector<Exclusion> excluded;
};

/// Duration counter `t0` used for the forecast `step` months past a row
/// with the given duration and failure flag.
double horizon_t0(double duration, bool failed, int step);

/// Forecasts from a single model. `panel` must carry the columns produced by
/// build_spells. Countries are forecast from their row at the panel's last
/// month with covariates frozen; countries without such a row, or with a
/// missing covariate there, are excluded.
ForecastResult forecast(const spdur::SpdurFit& fit, const Panel& panel, int horizon);

/// Ensemble forecast: every component's monthly conditional hazard is
/// calibrated, then combined with the ensemble weights. `components` follow
/// the order of `ensemble.models`.
ForecastResult forecast(const ebma::EnsembleFit& ensemble, std::span<const spdur::SpdurFit> components,
                        const Panel& panel, int horizon);

/// Top `k` entries by descending p_window, ties by country_id.
std::vector<ForecastEntry> rank_table(std::span<const ForecastEntry> entries, std::size_t k);

/// Columns country_id, name, p_window, p_1..p_n at full precision.
void write_forecast_csv(const std::string& path, const ForecastResult& result);
/// Columns country_id, p_window for choropleth rendering.
void write_forecast_map(const std::string& path, const ForecastResult& result);
/// Plain-text ranking, one "name, probability" line per country with
/// probabilities rounded to two decimals, followed by any exclusions.
std::string format_rank_report(const ForecastResult& result, std::size_t k);
void write_rank_report(const std::string& path, const ForecastResult& result, std::size_t k);

} // namespace ilcast::forecast
