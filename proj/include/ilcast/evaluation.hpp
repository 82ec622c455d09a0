#pragma once

#include "ilcast/calendar.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ilcast::eval {

struct ConfusionCounts {
    long tn = 0;
    long fp = 0;
    long fn = 0;
    long tp = 0;

    long total() const { return tn + fp + fn + tp; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Counts with "predicted positive" meaning p > tau (strict).
ConfusionCounts confusion(std::span<const double> predictions, std::span<const int> outcomes, double tau);

/// Each metric is empty when its denominator is zero.
struct Metrics {
    std::optional<double> accuracy;
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> specificity;
    std::optional<double> fpr;
    std::optional<double> f_score;
};

Metrics metrics(const ConfusionCounts& c, double beta_f = 1.0);

/// Threshold among the observed prediction values that maximizes F_beta
/// (an undefined F counts as 0). Ties go to the smallest threshold.
double optimal_tau(std::span<const double> predictions, std::span<const int> outcomes, double beta_f = 1.0);

struct RocPoint {
    double fpr = 0;
    double tpr = 0;
    double threshold = 0;  ///< rows with p >= threshold are positive; +inf at the origin
};

struct RocResult {
    std::vector<RocPoint> curve;
    double auc = 0;            ///< Mann-Whitney rank statistic, ties count one half
    double auc_trapezoid = 0;  ///< trapezoid area under `curve`
};

RocResult roc_auc(std::span<const double> predictions, std::span<const int> outcomes);

struct SeparationRow {
    long rank = 0;  ///< 1-based position after sorting
    std::size_t index = 0;
    int outcome = 0;
    double prediction = 0;
};

/// Rows ordered by ascending prediction, ties by original index.
std::vector<SeparationRow> separation_plot_data(std::span<const double> predictions, std::span<const int> outcomes);

/// 1 - prod(1 - p).
double aggregate_probability(std::span<const double> probabilities);

/// A prediction tied to a country-month.
struct ScoredRow {
    long country_id = 0;
    YearMonth date;
    double prediction = 0;
    int outcome = 0;
};

struct YearRow {
    long country_id = 0;
    int year = 0;
    double prediction = 0;
    int outcome = 0;
    int months = 0;
};

/// Country-year aggregation: outcome is the max of the monthly outcomes and
/// the probability is 1 - prod(1 - p) over the available months.
std::vector<YearRow> annualize(std::span<const ScoredRow> rows);

struct FuzzyPrecision {
    long tp = 0;
    long fp = 0;
    long window_true_fp = 0;
    std::optional<double> precision;
    std::optional<double> revised;
};

/// (tp + window_true_fp) / (tp + fp); empty when tp + fp = 0.
std::optional<double> revised_precision(long tp, long fp, long window_true_fp);

/// A false positive counts as window-true when the same country has an
/// observed event within +/- `window` calendar months. Events are taken from
/// `rows` unless `events` is supplied.
FuzzyPrecision fuzzy_precision(std::span<const ScoredRow> rows, double tau, int window = 6,
                               std::optional<std::span<const ScoredRow>> events = std::nullopt);

double brier_score(std::span<const double> predictions, std::span<const int> outcomes);

/// One model's predictions on one partition.
struct ScoredSet {
    std::string model;
    std::string partition;
    std::optional<double> weight;
    std::vector<ScoredRow> rows;
};

struct ReportOptions {
    double beta_f = 1.0;
    int window = 6;
};

struct FitReportRow {
    std::string block;  ///< "monthly" or "annual"
    std::string model;
    std::string partition;
    std::optional<double> weight;
    std::optional<double> auc;
    std::optional<double> tau;
    std::optional<double> accuracy;
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> brier;
    std::optional<double> revised_precision;  ///< monthly block only
    long n = 0;
    long positives = 0;
};

/// Scores every set on monthly and annualized data (monthly rows first).
/// Tau is chosen per set by F_beta maximization; metrics needing both classes
/// are empty when a class is absent.
std::vector<FitReportRow> fit_report(std::span<const ScoredSet> sets, const ReportOptions& options = {});

void write_fit_report(const std::string& path, std::span<const FitReportRow> rows);
void write_roc_curve(const std::string& path, const RocResult& roc);
void write_separation_plot(const std::string& path, std::span<const SeparationRow> rows);

} // namespace ilcast::eval
