#include "ilcast/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ilcast::optim {

namespace {

struct Probe {
    double step = 0;
    double value = 0;
    double slope = 0;
    Eigen::VectorXd x;
    Eigen::VectorXd grad;
};

bool finite(double v) { return std::isfinite(v); }

} // namespace

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const BfgsOptions& options) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    const auto n = x0.size();

    BfgsResult res;
    res.x = std::move(x0);
    res.gradient.resize(n);
    res.value = f(res.x, &res.gradient);
    res.evaluations = 1;
    if (!finite(res.value) || !res.gradient.allFinite()) {
        res.message = "objective not finite at the start point";
        return res;
    }

    Eigen::MatrixXd inv_h = Eigen::MatrixXd::Identity(n, n);
    bool scaled = false;

    auto converged = [&](double value, const Eigen::VectorXd& g) {
        return g.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance * std::max(1.0, std::abs(value));
    };

    for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
        if (converged(res.value, res.gradient)) {
            res.converged = true;
            res.message = "gradient tolerance reached";
            return res;
        }
        Eigen::VectorXd dir = -inv_h * res.gradient;
        double slope0 = res.gradient.dot(dir);
        if (!(slope0 < 0)) {
            // Not a descent direction: restart from steepest descent.
            inv_h.setIdentity();
            scaled = false;
            dir = -res.gradient;
            slope0 = res.gradient.dot(dir);
        }

        auto evaluate = [&](double step) {
            Probe p;
            p.step = step;
            p.x = res.x + step * dir;
            p.grad.resize(n);
            p.value = f(p.x, &p.grad);
            ++res.evaluations;
            if (!finite(p.value) || !p.grad.allFinite()) p.value = std::numeric_limits<double>::infinity();
            p.slope = finite(p.value) ? p.grad.dot(dir) : 0.0;
            return p;
        };

        // Strong Wolfe line search: bracket, then zoom by bisection.
        Probe origin;
        origin.value = res.value;
        origin.slope = slope0;
        origin.x = res.x;
        origin.grad = res.gradient;
        auto sufficient = [&](const Probe& p) {
            return finite(p.value) && p.value <= res.value + c1 * p.step * slope0;
        };
        auto curvature = [&](const Probe& p) { return std::abs(p.slope) <= -c2 * slope0; };

        int budget = options.max_line_search;
        auto zoom = [&](Probe lo, Probe hi) -> Probe {
            while (budget-- > 0) {
                Probe p = evaluate(0.5 * (lo.step + hi.step));
                if (!sufficient(p) || p.value >= lo.value) {
                    hi = std::move(p);
                } else {
                    if (curvature(p)) return p;
                    if (p.slope * (hi.step - lo.step) >= 0) hi = lo;
                    lo = std::move(p);
                }
                if (std::abs(hi.step - lo.step) <= 1e-16 * std::max(1.0, lo.step)) break;
            }
            return lo;
        };

        double step = 1.0;
        if (!scaled)
            step = std::min(1.0, 1.0 / std::max(1e-12, res.gradient.lpNorm<Eigen::Infinity>()));
        Probe prev = origin;
        Probe accepted = origin;
        for (int k = 0; budget-- > 0; ++k) {
            Probe p = evaluate(step);
            if (!sufficient(p) || (k > 0 && p.value >= prev.value)) {
                accepted = zoom(prev, p);
                break;
            }
            if (curvature(p)) {
                accepted = std::move(p);
                break;
            }
            if (p.slope >= 0) {
                accepted = zoom(p, prev);
                break;
            }
            prev = std::move(p);
            step *= 2.0;
            accepted = prev;
        }
        if (!(accepted.step > 0) || !(accepted.value < res.value)) {
            // No representable decrease along the quasi-Newton direction. Accept
            // the point when the predicted remaining decrease is negligible.
            const double predicted = -0.5 * slope0;
            if (converged(res.value, res.gradient) ||
                predicted <= options.function_tolerance * std::max(1.0, std::abs(res.value))) {
                res.converged = true;
                res.message = "no further decrease possible; predicted decrease below tolerance";
            } else {
                res.message = "line search failed";
            }
            return res;
        }

        const Eigen::VectorXd s = accepted.x - res.x;
        const Eigen::VectorXd y = accepted.grad - res.gradient;
        const double sy = s.dot(y);
        res.x = accepted.x;
        res.value = accepted.value;
        res.gradient = accepted.grad;

        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                inv_h = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = inv_h * y;
            inv_h += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) -
                     rho * (hy * s.transpose() + s * hy.transpose());
        }
    }
    res.converged = converged(res.value, res.gradient);
    res.message = res.converged ? "gradient tolerance reached" : "iteration limit reached";
    return res;
}

Eigen::MatrixXd numeric_hessian(const Gradient& grad, const Eigen::VectorXd& x, double relative_step) {
    const auto n = x.size();
    Eigen::MatrixXd h(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double step = relative_step * std::max(1.0, std::abs(x(j)));
        Eigen::VectorXd xp = x, xm = x;
        xp(j) += step;
        xm(j) -= step;
        h.col(j) = (grad(xp) - grad(xm)) / (xp(j) - xm(j));
    }
    return 0.5 * (h + h.transpose());
}

} // namespace ilcast::optim
