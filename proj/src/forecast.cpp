#include "ilcast/forecast.hpp"

#include "ilcast/csv.hpp"
#include "ilcast/error.hpp"
#include "ilcast/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace ilcast::forecast {

namespace {

// Monthly conditional hazard for one country, given its last row and the step.
using MonthlyModel = std::function<std::optional<double>(std::size_t row, double t0)>;

ForecastResult run(const Panel& panel, int horizon, const MonthlyModel& model) {
    if (horizon < 1) throw DataError("forecast horizon must be >= 1");
    if (panel.empty()) throw DataError("forecast: empty panel");
    const auto& duration = panel.covariate("duration");
    const auto& failure = panel.covariate("failure");

    ForecastResult res;
    res.last_observed = panel.last_month();
    res.horizon = horizon;
    for (const auto& [begin, end] : panel.country_blocks()) {
        const std::size_t row = end - 1;
        const int c = panel.country(row);
        if (panel.month(row) != res.last_observed) {
            res.excluded.push_back({c, "no observation at " + res.last_observed.to_string()});
            continue;
        }
        if (!duration[row] || !failure[row]) {
            res.excluded.push_back({c, "missing duration at " + res.last_observed.to_string()});
            continue;
        }
        ForecastEntry e;
        e.country_id = c;
        e.name = panel.name(c);
        e.first_month = res.last_observed + 1;
        e.horizon = horizon;
        bool complete = true;
        for (int step = 1; step <= horizon && complete; ++step) {
            const auto p = model(row, horizon_t0(*duration[row], *failure[row] == 1, step));
            if (!p)
                complete = false;
            else
                e.monthly.push_back(*p);
        }
        if (!complete) {
            res.excluded.push_back({c, "missing covariates at " + res.last_observed.to_string()});
            continue;
        }
        e.p_window = eval::aggregate_probability(e.monthly);
        res.entries.push_back(std::move(e));
    }
    return res;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    return out;
}

std::string month_label(YearMonth m) {
    static const std::array<const char*, 12> names{"January", "February", "March",     "April",   "May",      "June",
                                                   "July",    "August",   "September", "October", "November", "December"};
    return std::string(names[static_cast<std::size_t>(m.month - 1)]) + " " + std::to_string(m.year);
}

} // namespace

double horizon_t0(double duration, bool failed, int step) {
    const double base = failed ? 0.0 : duration;
    return base + step - 1;
}

ForecastResult forecast(const spdur::SpdurFit& fit, const Panel& panel, int horizon) {
    return run(panel, horizon, [&](std::size_t row, double t0) -> std::optional<double> {
        auto cov = spdur::row_covariates(fit, panel, row);
        if (!cov) return std::nullopt;
        return spdur::predict(fit, cov->first, cov->second, t0).cond_hazard;
    });
}

ForecastResult forecast(const ebma::EnsembleFit& ensemble, std::span<const spdur::SpdurFit> components,
                        const Panel& panel, int horizon) {
    if (components.size() != ensemble.weights.size() || ensemble.calibrations.size() != components.size())
        throw DataError("forecast: ensemble and component counts differ");
    return run(panel, horizon, [&](std::size_t row, double t0) -> std::optional<double> {
        std::vector<double> calibrated;
        for (std::size_t k = 0; k < components.size(); ++k) {
            auto cov = spdur::row_covariates(components[k], panel, row);
            if (!cov) return std::nullopt;
            const double p = spdur::predict(components[k], cov->first, cov->second, t0).cond_hazard;
            calibrated.push_back(ensemble.calibrations[k].apply(p));
        }
        return ebma::combine(ensemble.weights, calibrated);
    });
}

std::vector<ForecastEntry> rank_table(std::span<const ForecastEntry> entries, std::size_t k) {
    if (entries.empty()) throw DataError("rank_table: no forecasts");
    std::vector<ForecastEntry> sorted(entries.begin(), entries.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.p_window != b.p_window) return a.p_window > b.p_window;
        return a.country_id < b.country_id;
    });
    if (sorted.size() > k) sorted.resize(k);
    return sorted;
}

void write_forecast_csv(const std::string& path, const ForecastResult& result) {
    auto out = open_out(path);
    std::vector<std::string> header{"country_id", "name", "p_window"};
    for (int t = 1; t <= result.horizon; ++t) header.push_back("p_" + std::to_string(t));
    csv::write_row(out, header);
    for (const auto& e : result.entries) {
        std::vector<std::string> row{std::to_string(e.country_id), e.name, csv::format_double(e.p_window)};
        for (double p : e.monthly) row.push_back(csv::format_double(p));
        csv::write_row(out, row);
    }
}

void write_forecast_map(const std::string& path, const ForecastResult& result) {
    auto out = open_out(path);
    csv::write_row(out, {"country_id", "p_window"});
    for (const auto& e : result.entries)
        csv::write_row(out, {std::to_string(e.country_id), csv::format_double(e.p_window)});
}

std::string format_rank_report(const ForecastResult& result, std::size_t k) {
    std::ostringstream os;
    const YearMonth first = result.last_observed + 1;
    const YearMonth last = result.last_observed + result.horizon;
    const auto top = rank_table(result.entries, k);
    os << "Top " << top.size() << " forecasts for ILC between " << month_label(first) << " and " << month_label(last) << '\n';
    for (const auto& e : top) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", e.p_window);
        os << (e.name.empty() ? std::to_string(e.country_id) : e.name) << ", " << buf << '\n';
    }
    if (!result.excluded.empty()) {
        os << "\nExcluded:\n";
        for (const auto& x : result.excluded) os << x.country_id << ": " << x.reason << '\n';
    }
    return os.str();
}

void write_rank_report(const std::string& path, const ForecastResult& result, std::size_t k) {
    auto out = open_out(path);
    out << format_rank_report(result, k);
}

} // namespace ilcast::forecast
