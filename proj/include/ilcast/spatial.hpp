#pragma once

#include "ilcast/calendar.hpp"
#include "ilcast/panel.hpp"

#include <Eigen/Dense>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ilcast {

enum class WeightScheme { Knn4, CentDist, GowerEvents, GowerPol, GowerEcon };

/// Tag used in spatial-lag covariate names: knn4, centdist.std, gower.events, ...
std::string scheme_tag(WeightScheme scheme);
WeightScheme parse_scheme(std::string_view text);

/// Row-standardized country x country weights with a zero diagonal.
struct WeightMatrix {
    WeightScheme scheme = WeightScheme::Knn4;
    std::vector<int> countries;  ///< sorted ids; row/column order of `weights`
    Eigen::MatrixXd weights;
    /// Rows with no neighbor of positive weight (all zeros).
    std::vector<int> empty_rows;
    std::vector<std::string> warnings;

    std::optional<std::size_t> index_of(int country) const;
    double at(int from, int to) const;
};

struct LatLon {
    double lat = 0;
    double lon = 0;
};

struct CentroidSet {
    std::map<int, LatLon> centroids;
    std::vector<std::string> warnings;  ///< countries dropped for missing coordinates
};

/// Centroid CSV with columns country_id, lat, lon. Rows missing lat or lon are
/// excluded with a warning.
CentroidSet read_centroids(const std::string& path);
CentroidSet read_centroids(const csv::Table& table);

/// Great-circle distance in kilometres.
double haversine_km(LatLon a, LatLon b);
Eigen::MatrixXd distance_matrix(const std::map<int, LatLon>& centroids);

/// k nearest by distance, weight 1/k each (1/(n-1) when fewer exist).
/// Distance ties go to the lower country id.
WeightMatrix knn_weights(const std::vector<int>& countries, const Eigen::MatrixXd& dist, int k,
                         WeightScheme scheme = WeightScheme::Knn4);
WeightMatrix knn4_weights(const std::map<int, LatLon>& centroids);

/// w_ij proportional to 1/d_ij, row standardized. Throws on d_ij = 0 for i != j.
WeightMatrix inverse_distance_weights(const std::vector<int>& countries, const Eigen::MatrixXd& dist);
WeightMatrix centdist_weights(const std::map<int, LatLon>& centroids);

/// Per-country feature vectors for Gower similarity. Missing values are NaN.
struct GowerFeatures {
    std::vector<int> countries;
    std::vector<std::string> names;
    std::vector<bool> categorical;
    Eigen::MatrixXd values;  ///< countries x features
};

/// Country means of each feature over [from, to] (categorical: most frequent
/// value, ties to the smaller value).
GowerFeatures gower_features_from_panel(const Panel& panel, const std::vector<std::string>& numeric,
                                        const std::vector<std::string>& categorical, YearMonth from,
                                        YearMonth to);

/// Gower dissimilarity: mean over usable features of |x_i - x_j| / range
/// (numeric) or a mismatch indicator (categorical). Constant features are
/// skipped; throws DataError if every feature is constant.
Eigen::MatrixXd gower_dissimilarity(const GowerFeatures& features);
/// Weights from similarity 1 - d, diagonal zeroed, rows standardized.
WeightMatrix gower_weights(const GowerFeatures& features, WeightScheme scheme);

/// Adds `W.<tag>.<name>` = sum_j w_ij x_jt over neighbors with a value in the
/// same month, renormalized over those neighbors. Missing when none has a value.
Panel spatial_lag(const Panel& panel, const std::string& name, const WeightMatrix& w);

} // namespace ilcast
