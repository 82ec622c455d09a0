#pragma once

#include "ilcast/panel.hpp"

#include <string>
#include <vector>

namespace ilcast {

enum class VarianceClass { Static, Dynamic };

struct VarianceReport {
    std::string covariate;
    double ss_total = 0;
    double ss_between = 0;
    double ss_within = 0;
    double between_fraction = 0;
    VarianceClass classification = VarianceClass::Dynamic;
    long n_obs = 0;
};

inline constexpr double kDefaultStaticThreshold = 0.5;

/// Between/within-country decomposition of the total sum of squares. The
/// between part sums (country mean - grand mean)^2 over rows, so the identity
/// total = between + within is exact for unbalanced panels. Static iff
/// between_fraction > threshold. Missing values are skipped.
VarianceReport decompose(const Panel& panel, const std::string& name,
                         double threshold = kDefaultStaticThreshold);

/// Reports for several covariates, ordered by between_fraction (descending),
/// then by name.
std::vector<VarianceReport> decompose_all(const Panel& panel, const std::vector<std::string>& names,
                                          double threshold = kDefaultStaticThreshold);

std::string to_string(VarianceClass c);

void write_variance_csv(const std::string& path, const std::vector<VarianceReport>& reports);
/// Plot-ready points x = ss_total, y = between_fraction.
void write_variance_points(const std::string& path, const std::vector<VarianceReport>& reports);

} // namespace ilcast
