#include "ilcast/ebma.hpp"

#include "ilcast/csv.hpp"
#include "ilcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace ilcast::ebma {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double clamp_prob(double p) { return std::clamp(p, kPredictionFloor, 1.0 - kPredictionFloor); }
double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double bernoulli_loglik(std::span<const double> x, std::span<const int> y, double a0, double a1) {
    double ll = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double eta = a0 + a1 * x[i];
        // log logistic(eta) and log(1 - logistic(eta)) without cancellation
        const double log1pe = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
        ll += y[i] ? eta - log1pe : -log1pe;
    }
    return ll;
}

} // namespace

double ComponentCalibration::apply(double p) const { return logistic(a0 + a1 * logit(clamp_prob(p))); }

ComponentCalibration calibrate_component(std::span<const double> predictions, std::span<const int> outcomes,
                                         const std::string& model, const CalibrationOptions& options) {
    if (predictions.size() != outcomes.size())
        throw DataError("calibration: prediction and outcome lengths differ");
    long pos = 0;
    for (int y : outcomes) {
        if (y != 0 && y != 1) throw DataError("calibration: outcomes must be 0 or 1");
        pos += y;
    }
    const auto n = static_cast<long>(outcomes.size());
    if (pos == 0 || pos == n)
        throw DataError("calibration" + (model.empty() ? std::string() : " of '" + model + "'") +
                        ": needs at least one positive and one negative outcome");

    std::vector<double> x(predictions.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(predictions[i] >= 0 && predictions[i] <= 1))
            throw DataError("calibration: prediction outside [0,1] at row " + std::to_string(i));
        x[i] = logit(clamp_prob(predictions[i]));
    }

    ComponentCalibration cal;
    cal.model = model;
    cal.n_obs = n;
    const double base = static_cast<double>(pos) / static_cast<double>(n);
    const double intercept_only = logit(base);

    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (*hi - *lo <= 1e-12 * std::max(1.0, std::abs(*lo))) {
        cal.a0 = intercept_only;
        cal.a1 = 0;
        cal.warnings.push_back("constant predictions: slope not identified, intercept-only calibration");
        return cal;
    }

    // Newton-Raphson with step halving on the concave log-likelihood.
    double a0 = intercept_only, a1 = 0;
    double ll = bernoulli_loglik(x, outcomes, a0, a1);
    bool capped = false;
    bool converged = false;
    for (int it = 0; it < options.max_iterations; ++it) {
        double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double p = logistic(a0 + a1 * x[i]);
            const double r = outcomes[i] - p;
            const double w = p * (1.0 - p);
            g0 += r;
            g1 += r * x[i];
            h00 += w;
            h01 += w * x[i];
            h11 += w * x[i] * x[i];
        }
        const double det = h00 * h11 - h01 * h01;
        double d0, d1;
        if (det > 1e-300) {
            d0 = (h11 * g0 - h01 * g1) / det;
            d1 = (h00 * g1 - h01 * g0) / det;
        } else {
            d0 = g0;
            d1 = g1;
        }
        double step = 1.0, n0 = a0, n1 = a1, nll = ll;
        for (int k = 0; k < 60; ++k) {
            n0 = a0 + step * d0;
            n1 = a1 + step * d1;
            nll = bernoulli_loglik(x, outcomes, n0, n1);
            if (nll >= ll - 1e-12 * std::abs(ll)) break;
            step *= 0.5;
        }
        const double change = std::max(std::abs(n0 - a0), std::abs(n1 - a1));
        a0 = n0;
        a1 = n1;
        ll = nll;
        const double largest = std::max(std::abs(a0), std::abs(a1));
        if (largest > options.max_abs_coefficient) {
            // Diverging under separation: keep the direction, cap the scale.
            const double f = options.max_abs_coefficient / largest;
            a0 *= f;
            a1 *= f;
            capped = true;
            break;
        }
        if (change < options.tolerance) {
            converged = true;
            break;
        }
    }
    if (capped)
        cal.warnings.push_back("separation: calibration coefficients capped at " +
                               csv::format_double(options.max_abs_coefficient));
    else if (!converged)
        cal.warnings.push_back("calibration did not converge");

    if (a1 < 0) {
        // The concave optimum lies outside a1 >= 0, so the constrained one is on the boundary.
        a0 = intercept_only;
        a1 = 0;
        cal.warnings.push_back("negative slope constrained to 0 (intercept-only calibration)");
    }
    cal.a0 = a0;
    cal.a1 = a1;
    return cal;
}

namespace {

struct EmRun {
    std::vector<double> weights;
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
};

// Per-row component likelihoods Bern(y_i; p_ik).
MatrixXd component_likelihoods(const MatrixXd& p, std::span<const int> y) {
    MatrixXd l(p.rows(), p.cols());
    for (Index i = 0; i < p.rows(); ++i)
        for (Index k = 0; k < p.cols(); ++k) {
            const double q = clamp_prob(p(i, k));
            l(i, k) = y[static_cast<std::size_t>(i)] ? q : 1.0 - q;
        }
    return l;
}

EmRun run_em(const MatrixXd& lik, std::vector<double> w, const EmOptions& options) {
    const Index n = lik.rows(), k = lik.cols();
    EmRun run;
    auto mixture_loglik = [&](const std::vector<double>& weights) {
        double ll = 0;
        for (Index i = 0; i < n; ++i) {
            double s = 0;
            for (Index j = 0; j < k; ++j) s += weights[static_cast<std::size_t>(j)] * lik(i, j);
            ll += std::log(s);
        }
        return ll;
    };
    double ll = mixture_loglik(w);
    run.trace.push_back(ll);
    std::vector<double> next(static_cast<std::size_t>(k));
    for (int it = 0; it < options.max_iterations; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (Index i = 0; i < n; ++i) {
            double s = 0;
            for (Index j = 0; j < k; ++j) s += w[static_cast<std::size_t>(j)] * lik(i, j);
            for (Index j = 0; j < k; ++j) next[static_cast<std::size_t>(j)] += w[static_cast<std::size_t>(j)] * lik(i, j) / s;
        }
        double total = 0;
        for (auto& v : next) {
            v /= static_cast<double>(n);
            total += v;
        }
        for (auto& v : next) v /= total;
        w = next;
        const double nll = mixture_loglik(w);
        run.trace.push_back(nll);
        run.iterations = it + 1;
        const double gain = nll - ll;
        ll = nll;
        if (gain < options.tolerance) {
            run.converged = true;
            break;
        }
    }
    run.weights = std::move(w);
    return run;
}

} // namespace

EnsembleFit fit_weights(const MatrixXd& calibrated, std::span<const int> outcomes, std::vector<std::string> models,
                        const EmOptions& options) {
    const Index k = calibrated.cols();
    if (k < 1) throw DataError("ensemble: no component models");
    if (calibrated.rows() != static_cast<Index>(outcomes.size()))
        throw DataError("ensemble: prediction and outcome lengths differ");
    if (models.empty())
        for (Index j = 0; j < k; ++j) models.push_back("model" + std::to_string(j + 1));
    if (static_cast<Index>(models.size()) != k) throw DataError("ensemble: model name count mismatch");

    std::vector<Index> keep;
    for (Index i = 0; i < calibrated.rows(); ++i) {
        if (!calibrated.row(i).array().isFinite().all()) continue;
        const int y = outcomes[static_cast<std::size_t>(i)];
        if (y != 0 && y != 1) throw DataError("ensemble: outcomes must be 0 or 1");
        keep.push_back(i);
    }
    if (keep.empty()) throw DataError("ensemble: no complete rows");
    MatrixXd p(static_cast<Index>(keep.size()), k);
    std::vector<int> y(keep.size());
    for (std::size_t r = 0; r < keep.size(); ++r) {
        p.row(static_cast<Index>(r)) = calibrated.row(keep[r]);
        y[r] = outcomes[static_cast<std::size_t>(keep[r])];
    }
    const MatrixXd lik = component_likelihoods(p, y);

    EnsembleFit fit;
    fit.models = std::move(models);
    fit.n_obs = static_cast<long>(keep.size());
    fit.seed = options.seed;
    fit.restarts = options.restarts;
    if (k == 1) {
        fit.weights = {1.0};
        double ll = 0;
        for (Index i = 0; i < lik.rows(); ++i) ll += std::log(lik(i, 0));
        fit.loglik = ll;
        fit.trace = {ll};
        return fit;
    }

    EmRun best = run_em(lik, std::vector<double>(static_cast<std::size_t>(k), 1.0 / static_cast<double>(k)), options);
    std::mt19937_64 rng(options.seed);
    std::exponential_distribution<double> expo(1.0);
    for (int r = 0; r < options.restarts; ++r) {
        std::vector<double> w(static_cast<std::size_t>(k));
        double s = 0;
        for (auto& v : w) s += (v = expo(rng));
        for (auto& v : w) v /= s;
        EmRun run = run_em(lik, std::move(w), options);
        if (run.trace.back() > best.trace.back()) best = std::move(run);
    }
    fit.weights = best.weights;
    fit.trace = best.trace;
    fit.loglik = best.trace.back();
    fit.iterations = best.iterations;
    fit.converged = best.converged;
    return fit;
}

EnsembleFit fit_ensemble(const MatrixXd& raw, std::span<const int> outcomes, const std::vector<std::string>& models,
                         const CalibrationOptions& calibration, const EmOptions& em) {
    if (static_cast<Index>(models.size()) != raw.cols()) throw DataError("ensemble: model name count mismatch");
    if (raw.rows() != static_cast<Index>(outcomes.size()))
        throw DataError("ensemble: prediction and outcome lengths differ");
    std::vector<Index> keep;
    for (Index i = 0; i < raw.rows(); ++i)
        if (raw.row(i).array().isFinite().all()) keep.push_back(i);
    std::vector<int> y;
    for (Index i : keep) y.push_back(outcomes[static_cast<std::size_t>(i)]);

    std::vector<ComponentCalibration> cals;
    MatrixXd calibrated(static_cast<Index>(keep.size()), raw.cols());
    for (Index j = 0; j < raw.cols(); ++j) {
        std::vector<double> p;
        for (Index i : keep) p.push_back(raw(i, j));
        cals.push_back(calibrate_component(p, y, models[static_cast<std::size_t>(j)], calibration));
        for (std::size_t r = 0; r < p.size(); ++r) calibrated(static_cast<Index>(r), j) = cals.back().apply(p[r]);
    }
    EnsembleFit fit = fit_weights(calibrated, y, models, em);
    fit.calibrations = std::move(cals);
    return fit;
}

double combine(std::span<const double> weights, std::span<const double> calibrated) {
    if (weights.size() != calibrated.size()) throw DataError("ensemble: weight and prediction counts differ");
    double s = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) s += weights[k] * calibrated[k];
    return std::clamp(s, 0.0, 1.0);
}

VectorXd predict_ensemble(const EnsembleFit& fit, const MatrixXd& raw) {
    const auto k = fit.weights.size();
    if (static_cast<std::size_t>(raw.cols()) != k) throw DataError("ensemble: component count mismatch");
    if (fit.calibrations.size() != k) throw DataError("ensemble: fit carries no calibrations");
    VectorXd out(raw.rows());
    std::vector<double> row(k);
    for (Index i = 0; i < raw.rows(); ++i) {
        if (!raw.row(i).array().isFinite().all()) {
            out(i) = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        for (std::size_t j = 0; j < k; ++j) row[j] = fit.calibrations[j].apply(raw(i, static_cast<Index>(j)));
        out(i) = combine(fit.weights, row);
    }
    return out;
}

nlohmann::json to_json(const EnsembleFit& fit) {
    nlohmann::json j;
    j["format"] = "ilcast.ensemble";
    j["version"] = 1;
    j["models"] = fit.models;
    j["weights"] = fit.weights;
    auto cals = nlohmann::json::array();
    for (const auto& c : fit.calibrations)
        cals.push_back({{"model", c.model}, {"a0", c.a0}, {"a1", c.a1}, {"n_obs", c.n_obs}, {"warnings", c.warnings}});
    j["calibrations"] = cals;
    j["loglik"] = fit.loglik;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    j["n_obs"] = fit.n_obs;
    j["trace"] = fit.trace;
    j["seed"] = fit.seed;
    j["restarts"] = fit.restarts;
    return j;
}

EnsembleFit ensemble_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "ilcast.ensemble") throw DataError("not an ensemble file");
    EnsembleFit f;
    f.models = j.at("models").get<std::vector<std::string>>();
    f.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& c : j.at("calibrations")) {
        ComponentCalibration cal;
        cal.model = c.at("model").get<std::string>();
        cal.a0 = c.at("a0").get<double>();
        cal.a1 = c.at("a1").get<double>();
        cal.n_obs = c.at("n_obs").get<long>();
        cal.warnings = c.at("warnings").get<std::vector<std::string>>();
        f.calibrations.push_back(std::move(cal));
    }
    f.loglik = j.at("loglik").get<double>();
    f.iterations = j.at("iterations").get<int>();
    f.converged = j.at("converged").get<bool>();
    f.n_obs = j.at("n_obs").get<long>();
    f.trace = j.at("trace").get<std::vector<double>>();
    f.seed = j.at("seed").get<std::uint64_t>();
    f.restarts = j.at("restarts").get<int>();
    if (f.models.size() != f.weights.size() || (!f.calibrations.empty() && f.calibrations.size() != f.weights.size()))
        throw DataError("ensemble file has inconsistent dimensions");
    return f;
}

void save_ensemble(const std::string& path, const EnsembleFit& fit) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << to_json(fit).dump(2) << '\n';
}

EnsembleFit load_ensemble(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    try {
        return ensemble_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

void write_weight_table(const std::string& path, const EnsembleFit& fit) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    csv::write_row(out, {"model", "W", "a0", "a1"});
    for (std::size_t k = 0; k < fit.models.size(); ++k) {
        const bool has_cal = k < fit.calibrations.size();
        csv::write_row(out, {fit.models[k], csv::format_double(fit.weights[k]),
                             has_cal ? csv::format_double(fit.calibrations[k].a0) : "",
                             has_cal ? csv::format_double(fit.calibrations[k].a1) : ""});
    }
}

} // namespace ilcast::ebma
