#include "ilcast/spdur.hpp"

#include "ilcast/error.hpp"
#include "ilcast/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace ilcast::spdur {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kEulerGamma = 0.57721566490153286;

// Numerically stable logistic pieces: r = logistic(eta), q = 1 - r, log r.
struct Logistic {
    double r;
    double q;
    double log_r;
};

Logistic logistic(double eta) {
    if (eta >= 0) {
        const double e = std::exp(-eta);
        return {1.0 / (1.0 + e), e / (1.0 + e), -std::log1p(e)};
    }
    const double e = std::exp(eta);
    return {e / (1.0 + e), 1.0 / (1.0 + e), eta - std::log1p(e)};
}

const double kLogFloor = std::log(kProbFloor);

// Row term and (optionally) its gradient contributions. Returns the term.
// d_u is the derivative w.r.t. u = log(lambda) = -x'beta.
struct RowGrad {
    double d_u = 0;
    double d_eta = 0;
    double d_a = 0;
};

double row_term(double u, double eta, double a, double t, int failure, RowGrad* g) {
    const double alpha = std::exp(a);
    const double log_t = std::log(t);
    const double lh = alpha * (u + log_t);  // log H
    const double h = std::exp(lh);          // H = (lambda t)^alpha
    const Logistic lg = logistic(eta);
    if (failure == 1) {
        const bool floored = lg.log_r < kLogFloor;
        const double lr = floored ? kLogFloor : lg.log_r;
        const double term = lr + a + lh - log_t - h;
        if (g) {
            g->d_u = alpha * (1.0 - h);
            g->d_eta = floored ? 0.0 : lg.q;
            g->d_a = 1.0 + lh * (1.0 - h);
        }
        return term;
    }
    const double s = std::exp(-h);
    const double d = lg.q + lg.r * s;
    if (d < kProbFloor) {
        if (g) *g = RowGrad{};
        return kLogFloor;
    }
    if (g) {
        const double sh = std::exp(lh - h);  // S * H without overflow
        g->d_eta = -lg.r * lg.q * (1.0 - s) / d;
        g->d_u = -lg.r * alpha * sh / d;
        g->d_a = -lg.r * sh * lh / d;
    }
    return std::log(d);
}

void check_theta(const ModelFrame& frame, const VectorXd& theta) {
    if (theta.size() != frame.n_params())
        throw Error("parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                    std::to_string(frame.n_params()));
}

// Sum of row terms; stops at the first non-finite row and reports it.
double evaluate(const ModelFrame& frame, const VectorXd& theta, VectorXd* grad, long* bad_row) {
    const auto lay = layout_of(frame);
    const auto beta = theta.head(lay.n_beta);
    const auto gamma = theta.segment(lay.n_beta, lay.n_gamma);
    const double a = theta(lay.log_alpha_index());
    const VectorXd u = -(frame.X * beta);
    const VectorXd eta = frame.Z * gamma;
    double total = 0;
    VectorXd d_u, d_eta;
    double d_a = 0;
    if (grad) {
        d_u.resize(frame.size());
        d_eta.resize(frame.size());
    }
    for (Index i = 0; i < frame.size(); ++i) {
        RowGrad g;
        const double term = row_term(u(i), eta(i), a, frame.t(i), frame.failure[static_cast<std::size_t>(i)],
                                     grad ? &g : nullptr);
        if (!std::isfinite(term) || (grad && !(std::isfinite(g.d_u) && std::isfinite(g.d_eta) && std::isfinite(g.d_a)))) {
            if (bad_row) *bad_row = static_cast<long>(i);
            return std::numeric_limits<double>::quiet_NaN();
        }
        total += term;
        if (grad) {
            d_u(i) = g.d_u;
            d_eta(i) = g.d_eta;
            d_a += g.d_a;
        }
    }
    if (grad) {
        grad->resize(lay.size());
        grad->head(lay.n_beta) = -(frame.X.transpose() * d_u);
        grad->segment(lay.n_beta, lay.n_gamma) = frame.Z.transpose() * d_eta;
        (*grad)(lay.log_alpha_index()) = d_a;
    }
    return total;
}

} // namespace

ModelFrame make_frame(const MatrixXd& x_covariates, const MatrixXd& z_covariates, const VectorXd& t,
                      std::vector<int> failure, std::vector<std::string> x_names,
                      std::vector<std::string> z_names) {
    const Index n = t.size();
    if (x_covariates.rows() != n || z_covariates.rows() != n || static_cast<Index>(failure.size()) != n)
        throw DataError("model frame: inconsistent row counts");
    ModelFrame f;
    f.X.resize(n, x_covariates.cols() + 1);
    f.X.col(0).setOnes();
    f.X.rightCols(x_covariates.cols()) = x_covariates;
    f.Z.resize(n, z_covariates.cols() + 1);
    f.Z.col(0).setOnes();
    f.Z.rightCols(z_covariates.cols()) = z_covariates;
    f.t = t;
    f.failure = std::move(failure);
    for (Index i = 0; i < n; ++i) {
        if (!(f.t(i) > 0)) throw DataError("model frame: duration must be positive at row " + std::to_string(i));
        if (f.failure[static_cast<std::size_t>(i)] != 0 && f.failure[static_cast<std::size_t>(i)] != 1)
            throw DataError("model frame: failure flag not in {0,1} at row " + std::to_string(i));
    }
    auto names = [](std::vector<std::string> given, Index k, const char* prefix) {
        if (given.empty())
            for (Index j = 0; j < k; ++j) given.push_back(std::string(prefix) + std::to_string(j + 1));
        if (static_cast<Index>(given.size()) != k) throw DataError("model frame: name count mismatch");
        given.insert(given.begin(), kIntercept);
        return given;
    };
    f.x_names = names(std::move(x_names), x_covariates.cols(), "x");
    f.z_names = names(std::move(z_names), z_covariates.cols(), "z");
    f.source_rows.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) f.source_rows[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
    return f;
}

ModelFrame build_frame(const Panel& panel, const SpdurSpec& spec) {
    const auto& duration = panel.covariate("duration");
    const auto& failure = panel.covariate("failure");
    const Column* atrisk = panel.has_covariate("atrisk") ? &panel.covariate("atrisk") : nullptr;
    std::vector<const Column*> xs, zs;
    for (const auto& n : spec.duration) xs.push_back(&panel.covariate(n));
    for (const auto& n : spec.risk) zs.push_back(&panel.covariate(n));

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < panel.size(); ++i) {
        if (!duration[i] || !failure[i]) continue;
        bool complete = true;
        for (auto* c : xs) complete = complete && (*c)[i].has_value();
        for (auto* c : zs) complete = complete && (*c)[i].has_value();
        if (complete) keep.push_back(i);
    }
    const auto n = static_cast<Index>(keep.size());
    MatrixXd x(n, static_cast<Index>(xs.size())), z(n, static_cast<Index>(zs.size()));
    VectorXd t(n);
    std::vector<int> fail(keep.size());
    std::vector<int> risk;
    for (Index r = 0; r < n; ++r) {
        const auto i = keep[static_cast<std::size_t>(r)];
        for (std::size_t j = 0; j < xs.size(); ++j) x(r, static_cast<Index>(j)) = *(*xs[j])[i];
        for (std::size_t j = 0; j < zs.size(); ++j) z(r, static_cast<Index>(j)) = *(*zs[j])[i];
        t(r) = *duration[i];
        fail[static_cast<std::size_t>(r)] = static_cast<int>(*failure[i]);
        if (atrisk && (*atrisk)[i]) risk.push_back(static_cast<int>(*(*atrisk)[i]));
    }
    ModelFrame f = make_frame(x, z, t, std::move(fail), spec.duration, spec.risk);
    f.source_rows = std::move(keep);
    if (risk.size() == static_cast<std::size_t>(n)) f.atrisk = std::move(risk);
    return f;
}

double loglik(const ModelFrame& frame, const VectorXd& theta) {
    check_theta(frame, theta);
    long bad = -1;
    const double v = evaluate(frame, theta, nullptr, &bad);
    if (!std::isfinite(v)) throw NumericError("log-likelihood is not finite", bad);
    return v;
}

double loglik_gradient(const ModelFrame& frame, const VectorXd& theta, VectorXd& grad) {
    check_theta(frame, theta);
    long bad = -1;
    const double v = evaluate(frame, theta, &grad, &bad);
    if (!std::isfinite(v)) throw NumericError("log-likelihood is not finite", bad);
    return v;
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

struct Scaling {
    VectorXd mean;
    VectorXd scale;
};

// Centres and scales every non-intercept column in place.
Scaling standardize(MatrixXd& m, bool enabled, const std::vector<std::string>& names, const char* equation) {
    Scaling s{VectorXd::Zero(m.cols()), VectorXd::Ones(m.cols())};
    if (!enabled) return s;
    const double n = static_cast<double>(m.rows());
    for (Index j = 1; j < m.cols(); ++j) {
        const double mean = m.col(j).mean();
        const double sd = std::sqrt((m.col(j).array() - mean).square().sum() / n);
        if (!(sd > 0))
            throw DataError(std::string("rank-deficient ") + equation +
                            " design: column '" + names[static_cast<std::size_t>(j)] +
                            "' is constant (collinear with the intercept)");
        s.mean(j) = mean;
        s.scale(j) = sd;
        m.col(j) = (m.col(j).array() - mean) / sd;
    }
    return s;
}

void check_rank(const MatrixXd& m, const std::vector<std::string>& names, const char* equation) {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(m);
    qr.setThreshold(1e-10);
    const auto rank = qr.rank();
    if (rank == m.cols()) return;
    std::vector<std::string> dependent;
    for (Index k = rank; k < m.cols(); ++k)
        dependent.push_back(names[static_cast<std::size_t>(qr.colsPermutation().indices()(k))]);
    std::sort(dependent.begin(), dependent.end());
    std::string list;
    for (const auto& d : dependent) list += (list.empty() ? "" : ", ") + d;
    throw DataError(std::string("rank-deficient ") + equation + " design: collinear columns: " + list);
}

// Block-diagonal map from standardized to original coefficients: theta = A theta_s.
MatrixXd back_transform(const Scaling& sx, const Scaling& sz, const ParamLayout& lay) {
    MatrixXd a = MatrixXd::Zero(lay.size(), lay.size());
    auto block = [&](const Scaling& s, Index offset) {
        const Index k = s.mean.size();
        a(offset, offset) = 1.0;
        for (Index j = 1; j < k; ++j) {
            a(offset + j, offset + j) = 1.0 / s.scale(j);
            a(offset, offset + j) = -s.mean(j) / s.scale(j);
        }
    };
    block(sx, 0);
    block(sz, lay.n_beta);
    a(lay.log_alpha_index(), lay.log_alpha_index()) = 1.0;
    return a;
}

VectorXd start_values(const ModelFrame& f) {
    const auto lay = layout_of(f);
    VectorXd theta = VectorXd::Zero(lay.size());

    // Log-duration regression, on failure rows when there are enough of them.
    std::vector<Index> rows;
    for (Index i = 0; i < f.size(); ++i)
        if (f.failure[static_cast<std::size_t>(i)] == 1) rows.push_back(i);
    if (static_cast<Index>(rows.size()) <= f.X.cols()) {
        rows.clear();
        for (Index i = 0; i < f.size(); ++i) rows.push_back(i);
    }
    MatrixXd x(static_cast<Index>(rows.size()), f.X.cols());
    VectorXd y(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        x.row(static_cast<Index>(r)) = f.X.row(rows[r]);
        y(static_cast<Index>(r)) = std::log(f.t(rows[r]));
    }
    VectorXd beta = x.colPivHouseholderQr().solve(y);
    if (!beta.allFinite()) beta = VectorXd::Zero(f.X.cols());
    beta(0) += kEulerGamma;  // E[log T] = x'beta - Euler gamma when alpha = 1
    theta.head(lay.n_beta) = beta;

    double rate = 0.5;
    if (!f.atrisk.empty()) {
        double s = 0;
        for (int v : f.atrisk) s += v;
        rate = std::clamp(s / static_cast<double>(f.atrisk.size()), 0.01, 0.99);
    }
    theta(lay.n_beta) = std::log(rate / (1.0 - rate));
    return theta;
}

} // namespace

SpdurFit fit(const ModelFrame& frame, const SpdurSpec& spec, const FitOptions& options) {
    long n_fail = 0;
    for (int v : frame.failure) n_fail += v;
    if (n_fail == 0) throw DataError("fit needs at least one failure row");
    if (n_fail == frame.size()) throw DataError("fit needs at least one censored row");

    const auto lay = layout_of(frame);
    ModelFrame scaled = frame;
    const Scaling sx = standardize(scaled.X, options.standardize, frame.x_names, "duration");
    const Scaling sz = standardize(scaled.Z, options.standardize, frame.z_names, "risk");
    check_rank(scaled.X, frame.x_names, "duration");
    check_rank(scaled.Z, frame.z_names, "risk");
    const MatrixXd a = back_transform(sx, sz, lay);

    const VectorXd start = start_values(scaled);
    optim::Objective objective = [&](const VectorXd& th, VectorXd* g) {
        const double v = evaluate(scaled, th, g, nullptr);
        if (g && std::isfinite(v)) *g = -*g;
        return -v;
    };
    optim::BfgsOptions bo;
    bo.max_iterations = options.max_iterations;
    bo.gradient_tolerance = options.gradient_tolerance;
    auto res = optim::minimize_bfgs(objective, start, bo);

    SpdurFit out;
    out.spec = spec;
    out.x_names = frame.x_names;
    out.z_names = frame.z_names;
    out.n_obs = frame.size();
    out.n_failures = n_fail;
    out.iterations = res.iterations;
    out.converged = res.converged;
    if (!res.converged) out.warnings.push_back("optimizer did not converge: " + res.message);
    out.start_loglik = -objective(start, nullptr);

    const VectorXd theta = a * res.x;
    out.beta = theta.head(lay.n_beta);
    out.gamma = theta.segment(lay.n_beta, lay.n_gamma);
    out.log_alpha = theta(lay.log_alpha_index());
    out.alpha = std::exp(out.log_alpha);

    VectorXd grad;
    out.loglik = loglik_gradient(frame, theta, grad);
    out.gradient_norm = grad.lpNorm<Eigen::Infinity>();

    // Observed information in the standardized space, mapped back.
    optim::Gradient g_scaled = [&](const VectorXd& th) {
        VectorXd g;
        evaluate(scaled, th, &g, nullptr);
        return VectorXd(-g);
    };
    const MatrixXd hess = optim::numeric_hessian(g_scaled, res.x, options.hessian_step);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(hess);
    const VectorXd ev = eig.eigenvalues();
    const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    VectorXd inv_ev(ev.size());
    bool singular = false;
    for (Index k = 0; k < ev.size(); ++k) {
        if (ev(k) > tol) {
            inv_ev(k) = 1.0 / ev(k);
        } else {
            inv_ev(k) = 0.0;
            singular = true;
        }
    }
    if (singular) {
        // Parameters moving along a flat direction are not identified.
        std::vector<bool> flat(static_cast<std::size_t>(lay.size()), false);
        for (Index k = 0; k < ev.size(); ++k) {
            if (ev(k) > tol) continue;
            const VectorXd dir = a * eig.eigenvectors().col(k);
            const double scale = dir.cwiseAbs().maxCoeff();
            for (Index j = 0; j < dir.size(); ++j)
                if (std::abs(dir(j)) > 1e-3 * scale) flat[static_cast<std::size_t>(j)] = true;
        }
        std::string names;
        const auto all_names = [&] {
            std::vector<std::string> n;
            for (const auto& x : frame.x_names) n.push_back("duration:" + x);
            for (const auto& z : frame.z_names) n.push_back("risk:" + z);
            n.push_back("log(alpha)");
            return n;
        }();
        for (std::size_t j = 0; j < flat.size(); ++j)
            if (flat[j]) {
                out.unidentified.push_back(static_cast<int>(j));
                names += (names.empty() ? "" : ", ") + all_names[j];
            }
        out.warnings.push_back("observed information is singular; vcov is a pseudo-inverse and these parameters are "
                               "not identified: " + names);
    }
    const MatrixXd vcov_scaled = eig.eigenvectors() * inv_ev.asDiagonal() * eig.eigenvectors().transpose();
    out.vcov = a * vcov_scaled * a.transpose();
    out.vcov = 0.5 * (out.vcov + out.vcov.transpose());
    return out;
}

SpdurFit fit(const Panel& panel, const SpdurSpec& spec, const FitOptions& options) {
    return fit(build_frame(panel, spec), spec, options);
}

VectorXd SpdurFit::theta() const {
    VectorXd th(beta.size() + gamma.size() + 1);
    th << beta, gamma, log_alpha;
    return th;
}

VectorXd SpdurFit::std_errors() const { return vcov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

std::vector<Coefficient> SpdurFit::coefficients() const {
    const VectorXd th = theta();
    const VectorXd se = std_errors();
    std::vector<Coefficient> out;
    for (Index k = 0; k < th.size(); ++k) {
        Coefficient c;
        if (k < beta.size()) {
            c.equation = "duration";
            c.name = x_names[static_cast<std::size_t>(k)];
        } else if (k < beta.size() + gamma.size()) {
            c.equation = "risk";
            c.name = z_names[static_cast<std::size_t>(k - beta.size())];
        } else {
            c.equation = "shape";
            c.name = "log(alpha)";
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const bool flat = std::find(unidentified.begin(), unidentified.end(), static_cast<int>(k)) != unidentified.end();
        c.estimate = th(k);
        c.std_error = flat ? nan : se(k);
        c.z = !flat && se(k) > 0 ? th(k) / se(k) : nan;
        c.p_value = !flat && se(k) > 0 ? std::erfc(std::abs(c.z) / std::numbers::sqrt2) : nan;
        out.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

double linear(const VectorXd& coef, std::span<const double> values, const char* what) {
    if (static_cast<Index>(values.size()) + 1 != coef.size())
        throw DataError(std::string(what) + " covariate count does not match the fit");
    double v = coef(0);
    for (std::size_t j = 0; j < values.size(); ++j) v += coef(static_cast<Index>(j) + 1) * values[j];
    return v;
}

} // namespace

Prediction predict(const SpdurFit& fit, std::span<const double> x, std::span<const double> z, double t) {
    if (!(t >= 0)) throw DataError("predict: survival time must be >= 0");
    const double lambda = std::exp(-linear(fit.beta, x, "duration"));
    const Logistic lg = logistic(linear(fit.gamma, z, "risk"));
    const double alpha = fit.alpha;
    auto cum_hazard = [&](double time) { return time > 0 ? std::pow(lambda * time, alpha) : 0.0; };
    const double h0 = cum_hazard(t);
    const double h1 = cum_hazard(t + 1);
    const double s = std::exp(-h0);

    Prediction p;
    p.risk_prob = lg.r;
    const double denom = lg.q + lg.r * s;
    p.cond_risk = denom > 0 ? lg.r * s / denom : 0.0;
    // An infinite rate makes both cumulative hazards infinite; the step then fails surely.
    p.step_prob = std::isinf(h0) ? 1.0 : -std::expm1(-(h1 - h0));
    p.cond_hazard = p.step_prob * p.cond_risk;
    if (t > 0)
        p.uncond_hazard = alpha * h0 / t;
    else if (alpha < 1)
        p.uncond_hazard = std::numeric_limits<double>::infinity();
    else if (alpha == 1)
        p.uncond_hazard = lambda;
    else
        p.uncond_hazard = 0.0;
    return p;
}

std::optional<std::pair<std::vector<double>, std::vector<double>>> row_covariates(
    const SpdurFit& fit, const Panel& panel, std::size_t row) {
    std::vector<double> x, z;
    for (const auto& n : fit.spec.duration) {
        const auto& v = panel.covariate(n)[row];
        if (!v) return std::nullopt;
        x.push_back(*v);
    }
    for (const auto& n : fit.spec.risk) {
        const auto& v = panel.covariate(n)[row];
        if (!v) return std::nullopt;
        z.push_back(*v);
    }
    return std::make_pair(std::move(x), std::move(z));
}

std::optional<Prediction> predict_row(const SpdurFit& fit, const Panel& panel, std::size_t row) {
    const auto& duration = panel.covariate("duration")[row];
    if (!duration) return std::nullopt;
    auto cov = row_covariates(fit, panel, row);
    if (!cov) return std::nullopt;
    return predict(fit, cov->first, cov->second, *duration - 1.0);
}

std::vector<HazardPoint> hazard_curve(const SpdurFit& fit, std::span<const double> x,
                                      std::span<const double> z, std::span<const double> times) {
    std::vector<HazardPoint> out;
    out.reserve(times.size());
    for (double t : times) {
        if (!(t > 0)) throw DataError("hazard_curve: times must be positive");
        const auto p = predict(fit, x, z, t);
        out.push_back({t, p.uncond_hazard, p.cond_risk, p.cond_hazard});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json vec_json(const VectorXd& v) {
    auto j = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

double num(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

VectorXd json_vec(const nlohmann::json& j) {
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = num(j[i]);
    return v;
}

} // namespace

nlohmann::json to_json(const SpdurFit& fit) {
    nlohmann::json j;
    j["format"] = "ilcast.spdur_fit";
    j["version"] = 1;
    j["spec"] = {{"duration", fit.spec.duration}, {"risk", fit.spec.risk}};
    j["x_names"] = fit.x_names;
    j["z_names"] = fit.z_names;
    j["beta"] = vec_json(fit.beta);
    j["gamma"] = vec_json(fit.gamma);
    j["alpha"] = fit.alpha;
    j["log_alpha"] = fit.log_alpha;
    auto v = nlohmann::json::array();
    for (Index r = 0; r < fit.vcov.rows(); ++r) v.push_back(vec_json(fit.vcov.row(r).transpose()));
    j["vcov"] = v;
    j["loglik"] = fit.loglik;
    j["start_loglik"] = fit.start_loglik;
    j["n_obs"] = fit.n_obs;
    j["n_failures"] = fit.n_failures;
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["gradient_norm"] = fit.gradient_norm;
    j["unidentified"] = fit.unidentified;
    j["warnings"] = fit.warnings;
    auto coefs = nlohmann::json::array();
    for (const auto& c : fit.coefficients())
        coefs.push_back({{"equation", c.equation}, {"name", c.name}, {"estimate", c.estimate},
                         {"std_error", c.std_error}, {"p", c.p_value}});
    j["coefficients"] = coefs;
    return j;
}

SpdurFit fit_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "ilcast.spdur_fit") throw DataError("not a spdur fit file");
    SpdurFit f;
    f.spec.duration = j.at("spec").at("duration").get<std::vector<std::string>>();
    f.spec.risk = j.at("spec").at("risk").get<std::vector<std::string>>();
    f.x_names = j.at("x_names").get<std::vector<std::string>>();
    f.z_names = j.at("z_names").get<std::vector<std::string>>();
    f.beta = json_vec(j.at("beta"));
    f.gamma = json_vec(j.at("gamma"));
    f.alpha = num(j.at("alpha"));
    f.log_alpha = num(j.at("log_alpha"));
    const auto& v = j.at("vcov");
    f.vcov.resize(static_cast<Index>(v.size()), static_cast<Index>(v.size()));
    for (std::size_t r = 0; r < v.size(); ++r) f.vcov.row(static_cast<Index>(r)) = json_vec(v[r]).transpose();
    f.loglik = num(j.at("loglik"));
    f.start_loglik = num(j.at("start_loglik"));
    f.n_obs = j.at("n_obs").get<long>();
    f.n_failures = j.at("n_failures").get<long>();
    f.converged = j.at("converged").get<bool>();
    f.iterations = j.at("iterations").get<int>();
    f.gradient_norm = num(j.at("gradient_norm"));
    f.unidentified = j.at("unidentified").get<std::vector<int>>();
    f.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (f.beta.size() != static_cast<Index>(f.x_names.size()) ||
        f.gamma.size() != static_cast<Index>(f.z_names.size()) ||
        f.vcov.rows() != f.beta.size() + f.gamma.size() + 1)
        throw DataError("spdur fit file has inconsistent dimensions");
    return f;
}

void save_fit(const std::string& path, const SpdurFit& fit) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << to_json(fit).dump(2) << '\n';
}

SpdurFit load_fit(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    try {
        return fit_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

} // namespace ilcast::spdur
