#pragma once

#include "ilcast/panel.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ilcast::spdur {

/// Covariates of the duration (AFT) and risk (logit) equations. Both
/// equations always carry an intercept, which is not listed here.
struct SpdurSpec {
    std::vector<std::string> duration;
    std::vector<std::string> risk;

    bool operator==(const SpdurSpec&) const = default;
};

inline const std::string kIntercept = "(Intercept)";

/// Complete-case design for one spec. Column 0 of X and Z is the intercept.
struct ModelFrame {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Z;
    Eigen::VectorXd t;           ///< observed duration (> 0)
    std::vector<int> failure;    ///< delta: 1 if the row ends in failure
    std::vector<int> atrisk;     ///< optional; used for start values only
    std::vector<std::size_t> source_rows;
    std::vector<std::string> x_names;
    std::vector<std::string> z_names;

    long size() const { return static_cast<long>(t.size()); }
    long n_params() const { return static_cast<long>(X.cols() + Z.cols() + 1); }
};

/// Builds the design from a panel carrying `duration` and `failure` columns
/// (and optionally `atrisk`). Rows with a missing value in either formula are
/// dropped (listwise deletion).
ModelFrame build_frame(const Panel& panel, const SpdurSpec& spec);

/// Frame from raw matrices (intercept columns added here).
ModelFrame make_frame(const Eigen::MatrixXd& x_covariates, const Eigen::MatrixXd& z_covariates,
                      const Eigen::VectorXd& t, std::vector<int> failure,
                      std::vector<std::string> x_names = {}, std::vector<std::string> z_names = {});

/// Parameter vector layout: [beta (X.cols) ; gamma (Z.cols) ; log alpha].
struct ParamLayout {
    long n_beta = 0;
    long n_gamma = 0;
    long size() const { return n_beta + n_gamma + 1; }
    long log_alpha_index() const { return n_beta + n_gamma; }
};

inline ParamLayout layout_of(const ModelFrame& f) { return {f.X.cols(), f.Z.cols()}; }

/// Lower bound applied to probabilities before taking logs.
inline constexpr double kProbFloor = 1e-12;

/// Split-population Weibull log-likelihood, one term per row:
///   delta * log[(1 - pi) f(t)] + (1 - delta) * log[pi + (1 - pi) S(t)]
/// with at-risk probability 1 - pi = logistic(z'gamma), lambda = exp(-x'beta),
/// S(t) = exp(-(lambda t)^alpha), f(t) = alpha lambda^alpha t^(alpha-1) S(t).
/// Throws NumericError carrying the first row whose term is not finite.
double loglik(const ModelFrame& frame, const Eigen::VectorXd& theta);

/// Log-likelihood and its analytic gradient with respect to theta.
double loglik_gradient(const ModelFrame& frame, const Eigen::VectorXd& theta, Eigen::VectorXd& grad);

struct FitOptions {
    int max_iterations = 1000;
    double gradient_tolerance = 1e-9;
    /// Optimize on centred and scaled covariates (estimates are reported on
    /// the original scale).
    bool standardize = true;
    /// Relative step of the numeric Hessian.
    double hessian_step = 1e-5;
};

struct Coefficient {
    std::string equation;  ///< "duration", "risk" or "shape"
    std::string name;
    double estimate = 0;
    double std_error = 0;
    double z = 0;
    double p_value = 1;
};

struct SpdurFit {
    SpdurSpec spec;
    std::vector<std::string> x_names;
    std::vector<std::string> z_names;
    Eigen::VectorXd beta;
    Eigen::VectorXd gamma;
    double alpha = 1;
    double log_alpha = 0;  ///< optimized parameter; alpha = exp(log_alpha)
    /// Covariance of (beta, gamma, log alpha).
    Eigen::MatrixXd vcov;
    double loglik = 0;
    double start_loglik = 0;
    long n_obs = 0;
    long n_failures = 0;
    bool converged = false;
    int iterations = 0;
    double gradient_norm = 0;
    /// Parameter indices (into theta) lying along flat directions of the
    /// likelihood; their standard errors are reported as undefined.
    std::vector<int> unidentified;
    std::vector<std::string> warnings;

    Eigen::VectorXd theta() const;
    Eigen::VectorXd std_errors() const;
    /// Two-sided normal-approximation tests for every parameter; NaN for
    /// unidentified parameters.
    std::vector<Coefficient> coefficients() const;
};

/// Maximum-likelihood fit. Start values: OLS of log duration for beta, the
/// intercept-only logit of the empirical at-risk rate for gamma, alpha = 1.
/// Throws DataError without at least one failure and one censored row, and
/// when a design is rank deficient (naming the collinear columns). A fit that
/// stops before the gradient tolerance is returned with converged = false.
SpdurFit fit(const ModelFrame& frame, const SpdurSpec& spec, const FitOptions& options = {});
SpdurFit fit(const Panel& panel, const SpdurSpec& spec, const FitOptions& options = {});

struct Prediction {
    double risk_prob = 0;      ///< logistic(z'gamma)
    double cond_risk = 0;      ///< P(at risk | survived to t)
    double step_prob = 0;      ///< 1 - S(t+1)/S(t): failure within the next month if at risk
    double cond_hazard = 0;    ///< step_prob * cond_risk
    double uncond_hazard = 0;  ///< instantaneous Weibull hazard at t (infinite at t = 0 if alpha < 1)
};

/// Prediction after surviving `t` months. `x` and `z` exclude the intercept.
Prediction predict(const SpdurFit& fit, std::span<const double> x, std::span<const double> z, double t);
/// Prediction for a panel row carrying `duration`; evaluated at t = duration - 1.
/// Empty when a formula covariate is missing.
std::optional<Prediction> predict_row(const SpdurFit& fit, const Panel& panel, std::size_t row);
/// Covariate vectors (no intercept) of a panel row; empty when any is missing.
std::optional<std::pair<std::vector<double>, std::vector<double>>> row_covariates(
    const SpdurFit& fit, const Panel& panel, std::size_t row);

struct HazardPoint {
    double t = 0;
    double uncond_hazard = 0;
    double cond_risk = 0;
    double cond_hazard = 0;
};

/// Hazard evolution for a fixed covariate profile. Throws for t <= 0.
std::vector<HazardPoint> hazard_curve(const SpdurFit& fit, std::span<const double> x,
                                      std::span<const double> z, std::span<const double> times);

nlohmann::json to_json(const SpdurFit& fit);
SpdurFit fit_from_json(const nlohmann::json& j);
void save_fit(const std::string& path, const SpdurFit& fit);
SpdurFit load_fit(const std::string& path);

} // namespace ilcast::spdur
