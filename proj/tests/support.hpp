#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance runner.

#include "ilcast/panel.hpp"
#include "ilcast/spdur.hpp"
#include "ilcast/spells.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace ilcast::testing {

inline std::filesystem::path source_dir() { return ILCAST_SOURCE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("ilcast-test-" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Monthly rows for one country from `first` to `last` inclusive.
inline void add_country(std::vector<PanelRecord>& records, int country, YearMonth first, YearMonth last,
                        const std::vector<YearMonth>& ilc_months = {}) {
    for (YearMonth m = first; m <= last; m = m + 1) {
        PanelRecord r;
        r.country_id = country;
        r.date = m;
        for (auto f : ilc_months)
            if (f == m) r.irr_exit = r.ilc = 1;
        records.push_back(r);
    }
}

/// Row index of (country, month) in a panel; throws when absent.
inline std::size_t row_of(const Panel& p, int country, YearMonth m) {
    auto r = p.find(country, m);
    if (!r) throw Error("row not found");
    return *r;
}

// Country codes used by the leader-history fixture.
inline constexpr int kThailand = 800;
inline constexpr int kFiji = 950;
inline constexpr int kMali = 432;

/// Spell fixture for the Thailand / Fiji / back-to-back Mali sequences. The
/// counter starts at the first panel month (2001-03); Mali's previous change
/// is seeded at 2002-06 so that its 2012-03 change closes a 117-month spell.
struct TtfFixture {
    Panel panel;
    std::vector<LeaderEvent> history;
    YearMonth backfill{2001, 3};
};

inline TtfFixture ttf_fixture() {
    TtfFixture f;
    const YearMonth first{2001, 3}, last{2014, 3};
    std::vector<PanelRecord> recs;
    add_country(recs, kThailand, first, last, {{2006, 9}});
    add_country(recs, kFiji, first, last, {{2006, 12}, {2007, 1}});
    add_country(recs, kMali, first, last, {{2002, 6}, {2012, 3}, {2012, 4}});
    f.panel = Panel::from_records(recs, {{kThailand, "Thailand"}, {kFiji, "Fiji"}, {kMali, "Mali"}});
    f.history = {{kThailand, {2006, 9}}, {kFiji, {2006, 12}}, {kFiji, {2007, 1}},
                 {kMali, {2002, 6}},     {kMali, {2012, 3}},  {kMali, {2012, 4}}};
    return f;
}

/// Direct transcription of the split-population Weibull likelihood for one
/// row, using pow() and no stabilization. Independent of the library code.
inline double brute_force_term(const std::vector<double>& x, const std::vector<double>& z,
                               const std::vector<double>& beta, const std::vector<double>& gamma, double log_alpha,
                               double t, int failure) {
    double xb = 0, zg = 0;
    for (std::size_t j = 0; j < beta.size(); ++j) xb += beta[j] * x[j];
    for (std::size_t j = 0; j < gamma.size(); ++j) zg += gamma[j] * z[j];
    const double alpha = std::exp(log_alpha);
    const double lambda = std::exp(-xb);
    const double at_risk = 1.0 / (1.0 + std::exp(-zg));  // 1 - pi
    const double immune = 1.0 - at_risk;                 // pi
    const double surv = std::exp(-std::pow(lambda * t, alpha));
    const double dens = alpha * std::pow(lambda, alpha) * std::pow(t, alpha - 1.0) * surv;
    return failure ? std::log(at_risk * dens) : std::log(immune + at_risk * surv);
}

/// Small frame with covariates and durations drawn from `rng`.
inline spdur::ModelFrame random_frame(std::mt19937_64& rng, long n, int kx = 1, int kz = 1) {
    std::normal_distribution<double> norm(0, 1);
    std::uniform_real_distribution<double> unif(0.5, 40);
    Eigen::MatrixXd x(n, kx), z(n, kz);
    Eigen::VectorXd t(n);
    std::vector<int> fail(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        for (int j = 0; j < kx; ++j) x(i, j) = norm(rng);
        for (int j = 0; j < kz; ++j) z(i, j) = norm(rng);
        t(i) = unif(rng);
        fail[static_cast<std::size_t>(i)] = (i % 3 == 0) ? 1 : 0;
    }
    return spdur::make_frame(x, z, t, fail);
}

/// Central finite-difference gradient of the library log-likelihood.
inline Eigen::VectorXd numeric_gradient(const spdur::ModelFrame& f, const Eigen::VectorXd& theta, double rel = 1e-6) {
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
        const double h = rel * std::max(1.0, std::abs(theta(j)));
        Eigen::VectorXd a = theta, b = theta;
        a(j) += h;
        b(j) -= h;
        g(j) = (spdur::loglik(f, a) - spdur::loglik(f, b)) / (a(j) - b(j));
    }
    return g;
}

} // namespace ilcast::testing
