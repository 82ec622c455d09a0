#include "ilcast/spatial.hpp"

#include "ilcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace ilcast {

std::string scheme_tag(WeightScheme scheme) {
    switch (scheme) {
    case WeightScheme::Knn4: return "knn4";
    case WeightScheme::CentDist: return "centdist.std";
    case WeightScheme::GowerEvents: return "gower.events";
    case WeightScheme::GowerPol: return "gower.pol";
    case WeightScheme::GowerEcon: break;
    }
    return "gower.econ";
}

WeightScheme parse_scheme(std::string_view text) {
    if (text == "knn4") return WeightScheme::Knn4;
    if (text == "centdist.std" || text == "centdist_std") return WeightScheme::CentDist;
    if (text == "gower.events" || text == "gower_events") return WeightScheme::GowerEvents;
    if (text == "gower.pol" || text == "gower_pol") return WeightScheme::GowerPol;
    if (text == "gower.econ" || text == "gower_econ") return WeightScheme::GowerEcon;
    throw DataError("unknown weighting scheme '" + std::string(text) + "'");
}

std::optional<std::size_t> WeightMatrix::index_of(int country) const {
    auto it = std::lower_bound(countries.begin(), countries.end(), country);
    if (it == countries.end() || *it != country) return std::nullopt;
    return static_cast<std::size_t>(it - countries.begin());
}

double WeightMatrix::at(int from, int to) const {
    auto i = index_of(from);
    auto j = index_of(to);
    if (!i || !j) throw DataError("weight lookup for unknown country");
    return weights(static_cast<Eigen::Index>(*i), static_cast<Eigen::Index>(*j));
}

CentroidSet read_centroids(const csv::Table& table) {
    const auto c_id = table.require_column("country_id", "centroids");
    const auto c_lat = table.require_column("lat", "centroids");
    const auto c_lon = table.require_column("lon", "centroids");
    CentroidSet out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto id = csv::parse_long(row[c_id]);
        if (!id) throw DataError("centroids row " + std::to_string(table.line_numbers[r]) +
                                 ": malformed country id");
        auto lat = csv::parse_double(row[c_lat]);
        auto lon = csv::parse_double(row[c_lon]);
        if (!lat || !lon) {
            out.warnings.push_back("country " + std::to_string(*id) +
                                   " has no centroid; excluded from distance weights");
            continue;
        }
        out.centroids[static_cast<int>(*id)] = {*lat, *lon};
    }
    return out;
}

CentroidSet read_centroids(const std::string& path) {
    auto table = csv::read_file(path);
    try {
        return read_centroids(table);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

double haversine_km(LatLon a, LatLon b) {
    constexpr double kEarthRadiusKm = 6371.0;
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (b.lat - a.lat) * rad;
    const double dlon = (b.lon - a.lon) * rad;
    const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(a.lat * rad) * std::cos(b.lat * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

Eigen::MatrixXd distance_matrix(const std::map<int, LatLon>& centroids) {
    std::vector<LatLon> pts;
    for (const auto& [id, ll] : centroids) pts.push_back(ll);
    const auto n = static_cast<Eigen::Index>(pts.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = haversine_km(pts[i], pts[j]);
    return d;
}

namespace {

std::vector<int> ids_of(const std::map<int, LatLon>& centroids) {
    std::vector<int> ids;
    for (const auto& [id, ll] : centroids) ids.push_back(id);
    return ids;
}

void check_square(const std::vector<int>& countries, const Eigen::MatrixXd& m) {
    const auto n = static_cast<Eigen::Index>(countries.size());
    if (m.rows() != n || m.cols() != n) throw DataError("distance matrix does not match country list");
    if (!std::is_sorted(countries.begin(), countries.end()) ||
        std::adjacent_find(countries.begin(), countries.end()) != countries.end())
        throw DataError("country list must be sorted and unique");
    if (countries.size() < 2) throw DataError("spatial weights need at least 2 countries");
}

// Row standardizes in place and records empty rows.
void standardize(WeightMatrix& w) {
    for (Eigen::Index i = 0; i < w.weights.rows(); ++i) {
        w.weights(i, i) = 0.0;
        const double s = w.weights.row(i).sum();
        if (s > 0)
            w.weights.row(i) /= s;
        else
            w.empty_rows.push_back(w.countries[static_cast<std::size_t>(i)]);
    }
}

} // namespace

WeightMatrix knn_weights(const std::vector<int>& countries, const Eigen::MatrixXd& dist, int k,
                         WeightScheme scheme) {
    check_square(countries, dist);
    if (k < 1) throw DataError("knn weights need k >= 1");
    const auto n = static_cast<Eigen::Index>(countries.size());
    WeightMatrix w;
    w.scheme = scheme;
    w.countries = countries;
    w.weights = Eigen::MatrixXd::Zero(n, n);
    std::vector<Eigen::Index> order;
    for (Eigen::Index i = 0; i < n; ++i) {
        order.clear();
        for (Eigen::Index j = 0; j < n; ++j)
            if (j != i) order.push_back(j);
        // Countries are sorted by id, so index order breaks distance ties by id.
        std::stable_sort(order.begin(), order.end(),
                         [&](Eigen::Index a, Eigen::Index b) { return dist(i, a) < dist(i, b); });
        const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
        for (std::size_t m = 0; m < take; ++m) w.weights(i, order[m]) = 1.0 / static_cast<double>(take);
    }
    return w;
}

WeightMatrix knn4_weights(const std::map<int, LatLon>& centroids) {
    return knn_weights(ids_of(centroids), distance_matrix(centroids), 4, WeightScheme::Knn4);
}

WeightMatrix inverse_distance_weights(const std::vector<int>& countries, const Eigen::MatrixXd& dist) {
    check_square(countries, dist);
    const auto n = static_cast<Eigen::Index>(countries.size());
    WeightMatrix w;
    w.scheme = WeightScheme::CentDist;
    w.countries = countries;
    w.weights = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j) continue;
            if (!(dist(i, j) > 0))
                throw DataError("coincident centroids for countries " +
                                std::to_string(countries[static_cast<std::size_t>(i)]) + " and " +
                                std::to_string(countries[static_cast<std::size_t>(j)]));
            w.weights(i, j) = 1.0 / dist(i, j);
        }
    standardize(w);
    return w;
}

WeightMatrix centdist_weights(const std::map<int, LatLon>& centroids) {
    return inverse_distance_weights(ids_of(centroids), distance_matrix(centroids));
}

GowerFeatures gower_features_from_panel(const Panel& panel, const std::vector<std::string>& numeric,
                                        const std::vector<std::string>& categorical, YearMonth from,
                                        YearMonth to) {
    GowerFeatures f;
    f.countries = panel.countries();
    const auto blocks = panel.country_blocks();
    f.values = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(f.countries.size()),
                                         static_cast<Eigen::Index>(numeric.size() + categorical.size()),
                                         std::numeric_limits<double>::quiet_NaN());
    Eigen::Index col = 0;
    for (const auto& name : numeric) {
        const auto& values = panel.covariate(name);
        for (std::size_t c = 0; c < blocks.size(); ++c) {
            double sum = 0;
            long n = 0;
            for (auto i = blocks[c].first; i < blocks[c].second; ++i) {
                if (panel.month(i) < from || panel.month(i) > to || !values[i]) continue;
                sum += *values[i];
                ++n;
            }
            if (n > 0) f.values(static_cast<Eigen::Index>(c), col) = sum / static_cast<double>(n);
        }
        f.names.push_back(name);
        f.categorical.push_back(false);
        ++col;
    }
    for (const auto& name : categorical) {
        const auto& values = panel.covariate(name);
        for (std::size_t c = 0; c < blocks.size(); ++c) {
            std::map<double, long> freq;
            for (auto i = blocks[c].first; i < blocks[c].second; ++i)
                if (panel.month(i) >= from && panel.month(i) <= to && values[i]) ++freq[*values[i]];
            long best = 0;
            for (const auto& [v, n] : freq)
                if (n > best) {
                    best = n;
                    f.values(static_cast<Eigen::Index>(c), col) = v;
                }
        }
        f.names.push_back(name);
        f.categorical.push_back(true);
        ++col;
    }
    return f;
}

Eigen::MatrixXd gower_dissimilarity(const GowerFeatures& features) {
    const auto n = features.values.rows();
    const auto p = features.values.cols();
    if (static_cast<std::size_t>(p) != features.categorical.size())
        throw DataError("gower: feature metadata does not match value matrix");
    std::vector<double> range(static_cast<std::size_t>(p), 0.0);
    std::vector<bool> usable(static_cast<std::size_t>(p), false);
    for (Eigen::Index k = 0; k < p; ++k) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        std::vector<double> levels;
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = features.values(i, k);
            if (std::isnan(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        range[static_cast<std::size_t>(k)] = hi - lo;
        usable[static_cast<std::size_t>(k)] = hi > lo;
    }
    if (std::none_of(usable.begin(), usable.end(), [](bool b) { return b; }))
        throw DataError("gower: every feature is constant (zero ranges)");

    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double sum = 0;
            int used = 0;
            for (Eigen::Index k = 0; k < p; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                const double a = features.values(i, k);
                const double b = features.values(j, k);
                if (!usable[ku] || std::isnan(a) || std::isnan(b)) continue;
                sum += features.categorical[ku] ? (a == b ? 0.0 : 1.0) : std::abs(a - b) / range[ku];
                ++used;
            }
            d(i, j) = d(j, i) = used > 0 ? sum / used : 1.0;
        }
    return d;
}

WeightMatrix gower_weights(const GowerFeatures& features, WeightScheme scheme) {
    if (features.countries.size() < 2) throw DataError("spatial weights need at least 2 countries");
    const Eigen::MatrixXd d = gower_dissimilarity(features);
    WeightMatrix w;
    w.scheme = scheme;
    w.countries = features.countries;
    w.weights = (1.0 - d.array()).matrix();
    standardize(w);
    for (int c : w.empty_rows)
        w.warnings.push_back("country " + std::to_string(c) + " has no Gower-similar neighbor");
    return w;
}

Panel spatial_lag(const Panel& panel, const std::string& name, const WeightMatrix& w) {
    const auto& values = panel.covariate(name);
    const auto countries = panel.countries();
    std::vector<Eigen::Index> row_of;
    for (int c : countries) {
        auto idx = w.index_of(c);
        if (!idx) throw DataError("weight matrix does not cover country " + std::to_string(c));
        row_of.push_back(static_cast<Eigen::Index>(*idx));
    }
    Column out(panel.size());
    for (std::size_t r = 0; r < panel.size(); ++r) {
        const auto ci = static_cast<std::size_t>(
            std::lower_bound(countries.begin(), countries.end(), panel.country(r)) - countries.begin());
        const Eigen::Index wi = row_of[ci];
        double num = 0, den = 0;
        for (Eigen::Index j = 0; j < w.weights.cols(); ++j) {
            const double wij = w.weights(wi, j);
            if (wij <= 0) continue;
            auto row = panel.find(w.countries[static_cast<std::size_t>(j)], panel.month(r));
            if (!row || !values[*row]) continue;
            num += wij * *values[*row];
            den += wij;
        }
        if (den > 0) out[r] = num / den;
    }
    return panel.with_covariate("W." + scheme_tag(w.scheme) + "." + name, std::move(out));
}

} // namespace ilcast
