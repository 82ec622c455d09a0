#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace ilcast::optim {

/// Objective to minimize. Writes the gradient into `grad` when it is non-null.
/// May return a non-finite value to signal an infeasible point.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;
using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd& x)>;

struct BfgsOptions {
    int max_iterations = 500;
    /// Converged when max|g_i| <= gradient_tolerance * max(1, |f|).
    double gradient_tolerance = 1e-9;
    /// Also converged when the line search stalls and the quadratic model
    /// predicts a decrease below function_tolerance * max(1, |f|).
    double function_tolerance = 1e-12;
    int max_line_search = 60;
};

struct BfgsResult {
    Eigen::VectorXd x;
    double value = 0;
    Eigen::VectorXd gradient;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
};

/// Quasi-Newton minimization with a bracketing Wolfe line search.
BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options = {});

/// Central-difference Jacobian of an analytic gradient, symmetrized.
Eigen::MatrixXd numeric_hessian(const Gradient& grad, const Eigen::VectorXd& x,
                                double relative_step = 1e-5);

} // namespace ilcast::optim
