#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ilcast::ebma {

/// Raw predictions are clamped to [kPredictionFloor, 1 - kPredictionFloor]
/// before the logit and inside the mixture likelihood.
inline constexpr double kPredictionFloor = 1e-6;

/// Logit-scale recalibration p~ = logistic(a0 + a1 * logit(p)).
struct ComponentCalibration {
    std::string model;
    double a0 = 0;
    double a1 = 1;
    long n_obs = 0;
    std::vector<std::string> warnings;

    double apply(double p) const;
};

struct CalibrationOptions {
    int max_iterations = 200;
    double tolerance = 1e-10;
    /// Bound on |a0| and |a1| under (quasi-)separation.
    double max_abs_coefficient = 30;
};

/// Maximum-likelihood logistic fit of outcomes on logit(prediction) with a1 >= 0.
/// Needs at least one positive and one negative outcome. Constant predictions
/// give the intercept-only fit at the base rate.
ComponentCalibration calibrate_component(std::span<const double> predictions, std::span<const int> outcomes,
                                         const std::string& model = {}, const CalibrationOptions& options = {});

struct EmOptions {
    int max_iterations = 10000;
    /// Stop once the log-likelihood gain of an iteration falls below this.
    double tolerance = 1e-8;
    /// Extra EM runs from Dirichlet(1) starting weights; the best run is kept.
    int restarts = 0;
    std::uint64_t seed = 20140301;
};

struct EnsembleFit {
    std::vector<std::string> models;
    std::vector<double> weights;
    std::vector<ComponentCalibration> calibrations;
    double loglik = 0;
    int iterations = 0;
    bool converged = true;
    long n_obs = 0;
    /// Log-likelihood after each M-step of the kept run (first entry: start).
    std::vector<double> trace;
    std::uint64_t seed = 0;
    int restarts = 0;
};

/// EM estimate of mixture weights. `calibrated` is rows x models; rows with a
/// NaN entry are dropped. Calibrations are left empty; see `fit_ensemble`.
EnsembleFit fit_weights(const Eigen::MatrixXd& calibrated, std::span<const int> outcomes,
                        std::vector<std::string> models = {}, const EmOptions& options = {});

/// Calibrates every column of `raw` on the outcomes, then fits weights on the
/// calibrated predictions. Rows with any NaN are dropped for both steps.
EnsembleFit fit_ensemble(const Eigen::MatrixXd& raw, std::span<const int> outcomes,
                         const std::vector<std::string>& models, const CalibrationOptions& calibration = {},
                         const EmOptions& em = {});

/// Weighted sum of already calibrated component predictions.
double combine(std::span<const double> weights, std::span<const double> calibrated);

/// Calibrates raw component predictions (rows x models) and combines them.
/// A row with a missing component yields NaN.
Eigen::VectorXd predict_ensemble(const EnsembleFit& fit, const Eigen::MatrixXd& raw);

nlohmann::json to_json(const EnsembleFit& fit);
EnsembleFit ensemble_from_json(const nlohmann::json& j);
void save_ensemble(const std::string& path, const EnsembleFit& fit);
EnsembleFit load_ensemble(const std::string& path);

/// CSV with columns model, W, a0, a1.
void write_weight_table(const std::string& path, const EnsembleFit& fit);

} // namespace ilcast::ebma
