#include "ilcast/evaluation.hpp"

#include "ilcast/csv.hpp"
#include "ilcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace ilcast::eval {

namespace {

void check_inputs(std::span<const double> p, std::span<const int> y, const char* what) {
    if (p.size() != y.size())
        throw DataError(std::string(what) + ": prediction and outcome lengths differ");
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0 && p[i] <= 1))
            throw DataError(std::string(what) + ": prediction outside [0,1] at row " + std::to_string(i));
        if (y[i] != 0 && y[i] != 1)
            throw DataError(std::string(what) + ": outcome not 0/1 at row " + std::to_string(i));
    }
}

std::optional<double> ratio(double num, double den) {
    if (den == 0) return std::nullopt;
    return num / den;
}

std::optional<double> f_beta(std::optional<double> precision, std::optional<double> recall, double beta) {
    if (!precision || !recall) return std::nullopt;
    const double b2 = beta * beta;
    return ratio((1 + b2) * *precision * *recall, b2 * *precision + *recall);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    return out;
}

} // namespace

ConfusionCounts confusion(std::span<const double> predictions, std::span<const int> outcomes, double tau) {
    check_inputs(predictions, outcomes, "confusion");
    ConfusionCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool positive = predictions[i] > tau;
        if (outcomes[i])
            (positive ? c.tp : c.fn)++;
        else
            (positive ? c.fp : c.tn)++;
    }
    return c;
}

Metrics metrics(const ConfusionCounts& c, double beta_f) {
    Metrics m;
    m.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()));
    m.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
    m.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
    m.specificity = ratio(static_cast<double>(c.tn), static_cast<double>(c.tn + c.fp));
    m.fpr = ratio(static_cast<double>(c.fp), static_cast<double>(c.tn + c.fp));
    m.f_score = f_beta(m.precision, m.recall, beta_f);
    return m;
}

double optimal_tau(std::span<const double> predictions, std::span<const int> outcomes, double beta_f) {
    check_inputs(predictions, outcomes, "optimal_tau");
    const long positives = std::count(outcomes.begin(), outcomes.end(), 1);
    if (positives == 0) throw DataError("optimal_tau: needs at least one positive outcome");
    const long negatives = static_cast<long>(outcomes.size()) - positives;

    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return predictions[a] < predictions[b]; });

    // Walk the distinct values upwards; at tau = v the positives are the rows above v.
    long below_pos = 0, below_neg = 0;
    double best_tau = predictions[order.front()];
    double best_f = -1;
    for (std::size_t k = 0; k < order.size();) {
        const double v = predictions[order[k]];
        while (k < order.size() && predictions[order[k]] == v) {
            (outcomes[order[k]] ? below_pos : below_neg)++;
            ++k;
        }
        ConfusionCounts c{below_neg, negatives - below_neg, below_pos, positives - below_pos};
        const double f = metrics(c, beta_f).f_score.value_or(0.0);
        if (f > best_f) {
            best_f = f;
            best_tau = v;
        }
    }
    return best_tau;
}

RocResult roc_auc(std::span<const double> predictions, std::span<const int> outcomes) {
    check_inputs(predictions, outcomes, "roc_auc");
    const long positives = std::count(outcomes.begin(), outcomes.end(), 1);
    const long negatives = static_cast<long>(outcomes.size()) - positives;
    if (positives == 0 || negatives == 0)
        throw DataError("roc_auc: needs at least one positive and one negative outcome");

    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return predictions[a] < predictions[b]; });

    RocResult res;
    // Rank statistic with midranks for ties.
    double rank_sum = 0;
    for (std::size_t k = 0; k < order.size();) {
        std::size_t end = k;
        while (end < order.size() && predictions[order[end]] == predictions[order[k]]) ++end;
        const double midrank = (static_cast<double>(k + 1) + static_cast<double>(end)) / 2.0;
        for (std::size_t m = k; m < end; ++m)
            if (outcomes[order[m]]) rank_sum += midrank;
        k = end;
    }
    const double np = static_cast<double>(positives), nn = static_cast<double>(negatives);
    res.auc = (rank_sum - np * (np + 1) / 2.0) / (np * nn);

    // Threshold sweep from the top.
    res.curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    long tp = 0, fp = 0;
    double area = 0;
    for (std::size_t k = order.size(); k > 0;) {
        const double v = predictions[order[k - 1]];
        while (k > 0 && predictions[order[k - 1]] == v) {
            (outcomes[order[k - 1]] ? tp : fp)++;
            --k;
        }
        RocPoint pt{static_cast<double>(fp) / nn, static_cast<double>(tp) / np, v};
        const RocPoint& prev = res.curve.back();
        area += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) / 2.0;
        res.curve.push_back(pt);
    }
    res.auc_trapezoid = area;
    return res;
}

std::vector<SeparationRow> separation_plot_data(std::span<const double> predictions, std::span<const int> outcomes) {
    if (predictions.size() != outcomes.size())
        throw DataError("separation plot: prediction and outcome lengths differ");
    std::vector<std::size_t> order(predictions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return predictions[a] < predictions[b]; });
    std::vector<SeparationRow> rows;
    rows.reserve(order.size());
    for (std::size_t k = 0; k < order.size(); ++k)
        rows.push_back({static_cast<long>(k + 1), order[k], outcomes[order[k]], predictions[order[k]]});
    return rows;
}

double aggregate_probability(std::span<const double> probabilities) {
    double survive = 1.0;
    for (double p : probabilities) {
        if (!(p >= 0 && p <= 1)) throw DataError("probability outside [0,1]");
        survive *= 1.0 - p;
    }
    return 1.0 - survive;
}

std::vector<YearRow> annualize(std::span<const ScoredRow> rows) {
    std::map<std::pair<long, int>, std::vector<const ScoredRow*>> groups;
    std::set<std::pair<long, long>> seen;
    for (const auto& r : rows) {
        if (!seen.insert({r.country_id, r.date.index()}).second)
            throw DataError("annualize: duplicate country-month (" + std::to_string(r.country_id) + ", " +
                            r.date.to_string() + ")");
        groups[{r.country_id, r.date.year}].push_back(&r);
    }
    std::vector<YearRow> out;
    for (const auto& [key, members] : groups) {
        YearRow y{key.first, key.second, 0, 0, static_cast<int>(members.size())};
        std::vector<double> p;
        for (const auto* m : members) {
            p.push_back(m->prediction);
            y.outcome = std::max(y.outcome, m->outcome);
        }
        y.prediction = aggregate_probability(p);
        out.push_back(y);
    }
    return out;
}

std::optional<double> revised_precision(long tp, long fp, long window_true_fp) {
    if (window_true_fp < 0 || window_true_fp > fp) throw DataError("window-true false positives must be in [0, fp]");
    return ratio(static_cast<double>(tp + window_true_fp), static_cast<double>(tp + fp));
}

FuzzyPrecision fuzzy_precision(std::span<const ScoredRow> rows, double tau, int window,
                               std::optional<std::span<const ScoredRow>> events) {
    if (window < 0) throw DataError("fuzzy precision: window must be >= 0");
    std::map<long, std::set<long>> event_months;
    for (const auto& e : events.value_or(rows))
        if (e.outcome == 1) event_months[e.country_id].insert(e.date.index());

    FuzzyPrecision f;
    for (const auto& r : rows) {
        if (!(r.prediction > tau)) continue;
        if (r.outcome == 1) {
            ++f.tp;
            continue;
        }
        ++f.fp;
        auto it = event_months.find(r.country_id);
        if (it == event_months.end()) continue;
        const long m = r.date.index();
        auto near = it->second.lower_bound(m - window);
        if (near != it->second.end() && *near <= m + window) ++f.window_true_fp;
    }
    f.precision = ratio(static_cast<double>(f.tp), static_cast<double>(f.tp + f.fp));
    f.revised = revised_precision(f.tp, f.fp, f.window_true_fp);
    return f;
}

double brier_score(std::span<const double> predictions, std::span<const int> outcomes) {
    check_inputs(predictions, outcomes, "brier");
    if (predictions.empty()) throw DataError("brier: no rows");
    double s = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - outcomes[i];
        s += d * d;
    }
    return s / static_cast<double>(predictions.size());
}

namespace {

FitReportRow score_block(const std::string& block, const ScoredSet& set, std::span<const double> p,
                         std::span<const int> y, const ReportOptions& options, bool fuzzy) {
    FitReportRow row;
    row.block = block;
    row.model = set.model;
    row.partition = set.partition;
    row.weight = set.weight;
    row.n = static_cast<long>(p.size());
    row.positives = std::count(y.begin(), y.end(), 1);
    if (p.empty()) return row;
    row.brier = brier_score(p, y);
    if (row.positives == 0 || row.positives == row.n) return row;
    row.auc = roc_auc(p, y).auc;
    row.tau = optimal_tau(p, y, options.beta_f);
    const auto m = metrics(confusion(p, y, *row.tau), options.beta_f);
    row.accuracy = m.accuracy;
    row.recall = m.recall;
    row.precision = m.precision;
    if (fuzzy) row.revised_precision = fuzzy_precision(set.rows, *row.tau, options.window).revised;
    return row;
}

} // namespace

std::vector<FitReportRow> fit_report(std::span<const ScoredSet> sets, const ReportOptions& options) {
    std::vector<FitReportRow> monthly, annual;
    for (const auto& set : sets) {
        std::vector<double> p;
        std::vector<int> y;
        for (const auto& r : set.rows) {
            p.push_back(r.prediction);
            y.push_back(r.outcome);
        }
        monthly.push_back(score_block("monthly", set, p, y, options, true));
        p.clear();
        y.clear();
        for (const auto& r : annualize(set.rows)) {
            p.push_back(r.prediction);
            y.push_back(r.outcome);
        }
        annual.push_back(score_block("annual", set, p, y, options, false));
    }
    monthly.insert(monthly.end(), annual.begin(), annual.end());
    return monthly;
}

void write_fit_report(const std::string& path, std::span<const FitReportRow> rows) {
    auto out = open_out(path);
    csv::write_row(out, {"block", "model", "partition", "W", "AUC", "tau", "accuracy", "recall", "precision",
                         "brier", "revised_precision", "n", "positives"});
    for (const auto& r : rows)
        csv::write_row(out, {r.block, r.model, r.partition, csv::format_optional(r.weight),
                             csv::format_optional(r.auc), csv::format_optional(r.tau),
                             csv::format_optional(r.accuracy), csv::format_optional(r.recall),
                             csv::format_optional(r.precision), csv::format_optional(r.brier),
                             csv::format_optional(r.revised_precision), std::to_string(r.n),
                             std::to_string(r.positives)});
}

void write_roc_curve(const std::string& path, const RocResult& roc) {
    auto out = open_out(path);
    csv::write_row(out, {"fpr", "tpr", "threshold"});
    for (const auto& p : roc.curve)
        csv::write_row(out, {csv::format_double(p.fpr), csv::format_double(p.tpr), csv::format_double(p.threshold)});
}

void write_separation_plot(const std::string& path, std::span<const SeparationRow> rows) {
    auto out = open_out(path);
    csv::write_row(out, {"rank", "index", "outcome", "prediction"});
    for (const auto& r : rows)
        csv::write_row(out, {std::to_string(r.rank), std::to_string(r.index), std::to_string(r.outcome),
                             csv::format_double(r.prediction)});
}

} // namespace ilcast::eval
