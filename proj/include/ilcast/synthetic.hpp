#pragma once

#include "ilcast/calendar.hpp"
#include "ilcast/spdur.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace ilcast::synthetic {

/// I.i.d. draws from the split-population Weibull process with one standard
/// normal covariate in each equation (plus intercepts).
struct SampleSpec {
    double beta0 = 6.4;
    double beta1 = -1.8;
    double gamma0 = 0.0;
    double gamma1 = 1.0;
    double alpha = 0.5;
    long n = 5000;
    /// Censoring times are uniform on (0, censor_max].
    double censor_max = 3000;
};

/// Each row: at risk with probability logistic(gamma0 + gamma1 z); at-risk rows
/// fail at T ~ Weibull(lambda = exp(-(beta0 + beta1 x)), alpha) unless censored
/// first; immune rows are censored.
spdur::ModelFrame draw_sample(const SampleSpec& spec, std::mt19937_64& rng);

/// Options for the bundled country-month dataset.
struct DatasetOptions {
    std::uint64_t seed = 7;
    YearMonth first_month{2009, 1};
    int months = 60;
    YearMonth backfill_start{2000, 1};
    /// Partition boundaries written into the config; the generator retries
    /// seeds until each window has at least `min_failures` failures.
    YearMonth train_end{2010, 12};
    YearMonth calibration_end{2012, 6};
    YearMonth test_end{2013, 12};
    int min_failures = 4;
};

struct DatasetSummary {
    std::uint64_t seed_used = 0;
    long rows = 0;
    long failures = 0;
    long train_failures = 0;
    long calibration_failures = 0;
    long test_failures = 0;
};

/// Writes panel.csv, history.csv, events.csv, centroids.csv and config.json
/// for six fictional countries into `dir` (created if needed).
DatasetSummary write_dataset(const std::string& dir, const DatasetOptions& options = {});

} // namespace ilcast::synthetic
