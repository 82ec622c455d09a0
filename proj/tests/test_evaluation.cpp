#include "ilcast/csv.hpp"
#include "ilcast/error.hpp"
#include "ilcast/evaluation.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace ilcast;
using namespace ilcast::eval;

namespace {

// Half-credit pairwise AUC over all positive x negative pairs.
double pairwise_auc(const std::vector<double>& p, const std::vector<int>& y) {
    double wins = 0;
    long pairs = 0;
    for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < p.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                wins += p[i] > p[j] ? 1.0 : p[i] == p[j] ? 0.5 : 0.0;
                ++pairs;
            }
    return wins / static_cast<double>(pairs);
}

double f_beta(const ConfusionCounts& c, double beta) {
    if (c.tp == 0) return 0;
    const double prec = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    const double rec = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    return (1 + beta * beta) * prec * rec / (prec * beta * beta + rec);
}

ConfusionCounts enumerate(const std::vector<double>& p, const std::vector<int>& y, double tau) {
    ConfusionCounts c;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool pos = p[i] > tau;
        if (pos && y[i]) ++c.tp;
        if (pos && !y[i]) ++c.fp;
        if (!pos && y[i]) ++c.fn;
        if (!pos && !y[i]) ++c.tn;
    }
    return c;
}

struct Random {
    std::vector<double> p;
    std::vector<int> y;
};

Random random_scores(std::uint64_t seed, std::size_t n, double signal, int levels = 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> norm(0, 1);
    std::uniform_real_distribution<double> unif(0, 1);
    Random r;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = unif(rng) < 0.2;
        double s = 1 / (1 + std::exp(-(signal * y + norm(rng))));
        if (levels > 0) s = std::round(s * levels) / levels;
        r.p.push_back(s);
        r.y.push_back(y);
    }
    r.y[0] = 1;
    r.y[1] = 0;
    return r;
}

ScoredRow sr(long c, YearMonth m, double p, int y) { return {c, m, p, y}; }

} // namespace

TEST_CASE("published confusion tables reproduce the quoted recall and precision") {
    const ConfusionCounts low{23505, 2199, 22, 22};
    const auto m = metrics(low);
    CHECK(*m.recall == doctest::Approx(0.50).epsilon(1e-12));
    CHECK(*m.precision == doctest::Approx(0.0099).epsilon(0.005));
    CHECK(std::round(*m.precision * 10000) / 100 == 0.99);

    const ConfusionCounts high{25627, 77, 40, 4};
    const auto h = metrics(high);
    CHECK(std::round(*h.recall * 1000) / 10 == 9.1);
    CHECK(std::round(*h.precision * 1000) / 10 == 4.9);
}

TEST_CASE("published window-true counts reproduce the revised precisions") {
    CHECK(*revised_precision(4, 77, 38) == doctest::Approx(42.0 / 81.0).epsilon(1e-15));
    CHECK(std::round(*revised_precision(4, 77, 38) * 100) == 52);
    CHECK(std::round(*revised_precision(22, 2199, 75) * 10000) / 100 == 4.37);
    CHECK_FALSE(revised_precision(0, 0, 0).has_value());
}

TEST_CASE("accuracy paradox: the all-zero predictor beats the low-threshold table") {
    const ConfusionCounts low{23505, 2199, 22, 22};
    const ConfusionCounts zero{25704, 0, 44, 0};
    CHECK(zero.total() == low.total());
    CHECK(std::round(*metrics(zero).accuracy * 1000) / 10 == 99.8);
    CHECK(*metrics(zero).accuracy > *metrics(low).accuracy);
    CHECK(*metrics(zero).recall == 0.0);
    CHECK_FALSE(metrics(zero).precision.has_value());
}

TEST_CASE("confusion: strict threshold and hand-made rows") {
    const std::vector<double> p{0.2, 0.5, 0.7, 0.5};
    const std::vector<int> y{0, 1, 1, 0};
    CHECK(confusion(p, y, 0.5) == ConfusionCounts{2, 0, 1, 1});
    CHECK(confusion(p, y, 0.1) == ConfusionCounts{0, 2, 0, 2});
    const auto none = confusion(p, y, 1.0);
    CHECK(none.fp == 0);
    CHECK(none.tp == 0);
    CHECK_THROWS_AS(confusion(p, std::vector<int>{0, 1}, 0.5), DataError);
}

TEST_CASE("property: confusion matches enumeration") {
    const auto r = random_scores(1, 300, 1.0, 20);
    for (double tau : {0.0, 0.1, 0.35, 0.5, 0.65, 0.9, 1.0}) {
        const auto c = confusion(r.p, r.y, tau);
        CHECK(c == enumerate(r.p, r.y, tau));
        CHECK(c.total() == 300);
    }
}

TEST_CASE("metrics: definitions and undefined values") {
    const auto m = metrics({5, 5, 5, 5});
    CHECK(*m.precision == 0.5);
    CHECK(*m.recall == 0.5);
    CHECK(*m.f_score == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(*m.specificity == 0.5);
    CHECK(*m.fpr == 0.5);
    CHECK(*m.accuracy == 0.5);
    const auto f2 = metrics({10, 2, 6, 4}, 2.0);
    const double prec = 4.0 / 6, rec = 4.0 / 10;
    CHECK(*f2.f_score == doctest::Approx(5 * prec * rec / (4 * prec + rec)).epsilon(1e-15));
    const auto empty = metrics({});
    CHECK_FALSE(empty.accuracy.has_value());
    CHECK_FALSE(empty.recall.has_value());
    CHECK_FALSE(empty.f_score.has_value());
    const auto no_pos = metrics({3, 1, 0, 0});
    CHECK_FALSE(no_pos.recall.has_value());
    CHECK(*no_pos.fpr == 0.25);
}

TEST_CASE("optimal_tau: separated predictions give F = 1 at the smallest such tau") {
    const std::vector<double> p{0.1, 0.2, 0.3, 0.6, 0.8};
    const std::vector<int> y{0, 0, 0, 1, 1};
    const double tau = optimal_tau(p, y);
    CHECK(tau == 0.3);
    CHECK(*metrics(confusion(p, y, tau)).f_score == 1.0);
    CHECK_THROWS_AS(optimal_tau(p, std::vector<int>(5, 0)), DataError);
}

TEST_CASE("property: optimal_tau matches an exhaustive scan") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto r = random_scores(seed, seed == 1 ? 10 : 150, 1.5, seed % 2 ? 10 : 0);
        for (double beta : {0.5, 1.0, 2.0}) {
            std::vector<double> cands = r.p;
            std::sort(cands.begin(), cands.end());
            double best_tau = cands[0], best_f = -1;
            for (double c : cands) {
                const double f = f_beta(enumerate(r.p, r.y, c), beta);
                if (f > best_f) {
                    best_f = f;
                    best_tau = c;
                }
            }
            CHECK(optimal_tau(r.p, r.y, beta) == best_tau);
        }
    }
}

TEST_CASE("roc: perfect ranking, tie fixture, endpoints") {
    const auto perfect = roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1});
    CHECK(perfect.auc == 1.0);
    CHECK(perfect.auc_trapezoid == doctest::Approx(1.0).epsilon(1e-15));

    const std::vector<double> p{0.9, 0.4, 0.4, 0.3, 0.8, 0.1};
    const std::vector<int> y{1, 1, 0, 0, 0, 1};
    const auto r = roc_auc(p, y);
    CHECK(r.auc == doctest::Approx(pairwise_auc(p, y)).epsilon(1e-15));
    CHECK(r.auc == doctest::Approx(4.5 / 9).epsilon(1e-15));
    CHECK(r.auc_trapezoid == doctest::Approx(r.auc).epsilon(1e-12));
    REQUIRE(r.curve.size() >= 2);
    CHECK(r.curve.front().fpr == 0.0);
    CHECK(r.curve.front().tpr == 0.0);
    CHECK(r.curve.back().fpr == 1.0);
    CHECK(r.curve.back().tpr == 1.0);
    CHECK_THROWS_AS(roc_auc(p, std::vector<int>(6, 1)), DataError);
}

TEST_CASE("property: rank AUC, pairwise AUC and trapezoid AUC agree") {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        const auto r = random_scores(seed, 200, 1.0, seed % 3 ? 8 : 0);
        const auto roc = roc_auc(r.p, r.y);
        CHECK(roc.auc == doctest::Approx(pairwise_auc(r.p, r.y)).epsilon(1e-12));
        CHECK(std::abs(roc.auc - roc.auc_trapezoid) < 1e-9);
        for (std::size_t i = 1; i < roc.curve.size(); ++i) {
            CHECK(roc.curve[i].fpr >= roc.curve[i - 1].fpr);
            CHECK(roc.curve[i].tpr >= roc.curve[i - 1].tpr);
        }
    }
}

TEST_CASE("property: AUC is invariant to strictly monotone transforms") {
    const auto r = random_scores(77, 400, 1.2, 12);
    std::vector<double> t1, t2;
    for (double v : r.p) {
        t1.push_back(std::sqrt(v));
        t2.push_back(0.25 + 0.5 * std::pow(v, 3));
    }
    const double base = roc_auc(r.p, r.y).auc;
    CHECK(roc_auc(t1, r.y).auc == doctest::Approx(base).epsilon(1e-14));
    CHECK(roc_auc(t2, r.y).auc == doctest::Approx(base).epsilon(1e-14));
}

TEST_CASE("roc: uninformative predictions give AUC near one half") {
    const auto r = random_scores(5, 20000, 0.0);
    CHECK(std::abs(roc_auc(r.p, r.y).auc - 0.5) < 0.02);
}

TEST_CASE("separation plot ordering") {
    const std::vector<double> sorted{0.1, 0.2, 0.3, 0.4};
    const std::vector<int> y{0, 1, 0, 1};
    const auto a = separation_plot_data(sorted, y);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a[i].index == i);
        CHECK(a[i].rank == static_cast<long>(i + 1));
    }
    const std::vector<double> rev{0.4, 0.3, 0.2, 0.1};
    const auto b = separation_plot_data(rev, y);
    for (std::size_t i = 0; i < 4; ++i) CHECK(b[i].index == 3 - i);

    const auto r = random_scores(9, 20, 1.0, 5);
    std::vector<std::size_t> order(20);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return r.p[i] < r.p[j]; });
    const auto c = separation_plot_data(r.p, r.y);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(c[i].index == order[i]);
        CHECK(c[i].outcome == r.y[order[i]]);
    }
}

TEST_CASE("aggregation and annualization") {
    CHECK(aggregate_probability(std::vector<double>{0.1, 0.1}) == doctest::Approx(0.19).epsilon(1e-12));
    CHECK(aggregate_probability(std::vector<double>(12, 0.05)) ==
          doctest::Approx(1 - std::pow(0.95, 12)).epsilon(1e-12));
    CHECK(std::round(aggregate_probability(std::vector<double>(12, 0.05)) * 10000) / 10000 == 0.4596);
    CHECK(aggregate_probability(std::vector<double>(12, 0.0)) == 0.0);

    std::vector<ScoredRow> rows;
    for (int m = 1; m <= 12; ++m) rows.push_back(sr(1, {2010, m}, 0.05, m == 4));
    rows.push_back(sr(1, {2011, 1}, 0.1, 0));
    rows.push_back(sr(1, {2011, 2}, 0.1, 0));
    rows.push_back(sr(2, {2010, 6}, 0.0, 0));
    const auto years = annualize(rows);
    REQUIRE(years.size() == 3);
    CHECK(years[0].outcome == 1);
    CHECK(years[0].months == 12);
    CHECK(years[0].prediction == doctest::Approx(0.4596).epsilon(1e-4));
    CHECK(years[1].year == 2011);
    CHECK(years[1].prediction == doctest::Approx(0.19).epsilon(1e-12));
    CHECK(years[1].outcome == 0);
    CHECK(years[2].prediction == 0.0);

    rows.push_back(sr(2, {2010, 6}, 0.3, 0));
    CHECK_THROWS_AS(annualize(rows), DataError);
}

TEST_CASE("property: annual probability lies between the monthly max and sum") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> unif(0, 0.2);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> p(1 + rng() % 12);
        for (auto& v : p) v = unif(rng);
        const double a = aggregate_probability(p);
        CHECK(a >= *std::max_element(p.begin(), p.end()) - 1e-15);
        CHECK(a <= std::accumulate(p.begin(), p.end(), 0.0) + 1e-15);
    }
}

TEST_CASE("fuzzy precision on an 8-row panel") {
    // Country 1 has an event in 2010-06; alarms (p = 0.9) in 2010-01, 2010-03,
    // 2010-06 and 2011-01. Country 2 never has an event but alarms in 2010-05.
    std::vector<ScoredRow> rows{sr(1, {2010, 1}, 0.9, 0), sr(1, {2010, 3}, 0.9, 0), sr(1, {2010, 6}, 0.9, 1),
                                sr(1, {2010, 8}, 0.1, 0), sr(1, {2011, 1}, 0.9, 0), sr(2, {2010, 5}, 0.9, 0),
                                sr(2, {2010, 6}, 0.1, 0), sr(2, {2010, 7}, 0.1, 0)};
    const auto f = fuzzy_precision(rows, 0.5);
    CHECK(f.tp == 1);
    CHECK(f.fp == 4);
    // 2010-01 and 2010-03 are within 6 months of 2010-06; 2011-01 is 7 months
    // away; country 2's alarm has no event in its own country.
    CHECK(f.window_true_fp == 2);
    CHECK(*f.precision == doctest::Approx(0.2));
    CHECK(*f.revised == doctest::Approx(0.6));

    const auto w0 = fuzzy_precision(rows, 0.5, 0);
    CHECK(w0.window_true_fp == 0);
    CHECK(*w0.revised == *w0.precision);

    const auto w7 = fuzzy_precision(rows, 0.5, 7);
    CHECK(w7.window_true_fp == 3);
}

TEST_CASE("property: revised precision never falls below precision") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> unif(0, 1);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<ScoredRow> rows;
        for (int c = 1; c <= 4; ++c)
            for (int m = 0; m < 36; ++m) rows.push_back(sr(c, YearMonth{2008, 1} + m, unif(rng), unif(rng) < 0.04));
        for (int window : {0, 1, 6, 12}) {
            const auto f = fuzzy_precision(rows, 0.8, window);
            if (f.precision) CHECK(*f.revised >= *f.precision);
        }
    }
}

TEST_CASE("brier score") {
    CHECK(brier_score(std::vector<double>{0.0, 1.0}, std::vector<int>{0, 1}) == 0.0);
    CHECK(brier_score(std::vector<double>{0.5, 0.5}, std::vector<int>{0, 1}) == 0.25);
}

TEST_CASE("fit report composes the metric operations") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> unif(0, 1);
    std::vector<ScoredSet> sets;
    for (const std::string model : {"a", "b"}) {
        ScoredSet s;
        s.model = model;
        s.partition = "test";
        s.weight = model == "a" ? 0.7 : 0.3;
        for (int c = 1; c <= 5; ++c)
            for (int m = 0; m < 24; ++m) {
                const int y = (c + m) % 11 == 0;
                s.rows.push_back(sr(c, YearMonth{2010, 1} + m, std::clamp(0.3 * y + 0.2 * unif(rng), 0.0, 1.0), y));
            }
        sets.push_back(s);
    }
    const auto report = fit_report(sets);
    REQUIRE(report.size() == 4);
    CHECK(report[0].block == "monthly");
    CHECK(report[2].block == "annual");
    for (std::size_t k = 0; k < 2; ++k) {
        const auto& row = report[k];
        const auto& s = sets[k];
        std::vector<double> p;
        std::vector<int> y;
        for (const auto& r : s.rows) {
            p.push_back(r.prediction);
            y.push_back(r.outcome);
        }
        const double tau = optimal_tau(p, y);
        const auto m = metrics(confusion(p, y, tau));
        CHECK(row.model == s.model);
        CHECK(*row.weight == *s.weight);
        CHECK(*row.auc == roc_auc(p, y).auc);
        CHECK(*row.tau == tau);
        CHECK(*row.accuracy == *m.accuracy);
        CHECK(*row.recall == *m.recall);
        CHECK(row.precision == m.precision);
        CHECK(*row.brier == brier_score(p, y));
        CHECK(row.revised_precision == fuzzy_precision(s.rows, tau, 6).revised);
        CHECK(row.n == 120);
    }
    const auto years = annualize(sets[0].rows);
    CHECK(report[2].n == static_cast<long>(years.size()));
    CHECK_FALSE(report[2].revised_precision.has_value());
}

TEST_CASE("fit report: a perfect model, and a partition with one class") {
    ScoredSet perfect{"p", "train", std::nullopt, {}};
    ScoredSet flat{"p", "test", std::nullopt, {}};
    for (int m = 0; m < 24; ++m) {
        const int y = m % 6 == 0;
        perfect.rows.push_back(sr(1, YearMonth{2000, 1} + m, y ? 0.9 : 0.1, y));
        flat.rows.push_back(sr(2, YearMonth{2000, 1} + m, 0.1, 0));
    }
    const std::vector<ScoredSet> sets{perfect, flat};
    const auto report = fit_report(sets);
    CHECK(*report[0].auc == 1.0);
    CHECK(*report[0].accuracy == 1.0);
    CHECK_FALSE(report[1].auc.has_value());
    CHECK_FALSE(report[1].tau.has_value());
    CHECK(report[1].brier.has_value());

    const auto dir = testing::scratch_dir("fit-report");
    write_fit_report((dir / "r.csv").string(), report);
    const auto t = csv::read_file((dir / "r.csv").string());
    CHECK(t.rows.size() == report.size());
}
