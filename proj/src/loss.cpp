#include "qboost/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qboost {

namespace {

constexpr double kPi = std::numbers::pi;

void check_tau(double tau) {
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("quantile level must be in (0, 1), got " +
                                    std::to_string(tau));
}

void check_residual(double u) {
    if (!std::isfinite(u))
        throw std::invalid_argument("residual must be finite");
}

void check_smoothing(double s) {
    if (!(s > 0.0) || !std::isfinite(s))
        throw std::invalid_argument("smoothing parameter s must be positive");
}

void check_delta(double delta) {
    if (!(delta > 0.0) || !std::isfinite(delta))
        throw std::invalid_argument("huber delta must be positive");
}

}  // namespace

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "pinball") return LossKind::pinball;
    if (name == "exponential") return LossKind::exponential;
    if (name == "huber") return LossKind::huber;
    if (name == "arctan") return LossKind::arctan;
    throw std::invalid_argument("unknown loss kind: " + name);
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::pinball: return "pinball";
        case LossKind::exponential: return "exponential";
        case LossKind::huber: return "huber";
        case LossKind::arctan: return "arctan";
    }
    throw std::logic_error("unreachable loss kind");
}

QuantileLevels::QuantileLevels(std::vector<double> levels)
    : levels_(std::move(levels)) {
    if (levels_.empty())
        throw std::invalid_argument("quantile levels must be non-empty");
    double prev = 0.0;
    for (double tau : levels_) {
        check_tau(tau);
        if (tau <= prev)
            throw std::invalid_argument("quantile levels must be strictly increasing");
        prev = tau;
    }
}

std::size_t QuantileLevels::index_of(double tau) const {
    for (std::size_t j = 0; j < levels_.size(); ++j)
        if (std::fabs(levels_[j] - tau) <= 1e-12) return j;
    throw std::invalid_argument("quantile level " + std::to_string(tau) +
                                " is not in the configured level set");
}

void LossSpec::validate() const {
    if (kind == LossKind::arctan || kind == LossKind::exponential) check_smoothing(s);
    if (kind == LossKind::huber) check_delta(delta);
}

double pinball(double u, double tau) {
    check_tau(tau);
    check_residual(u);
    return u >= 0.0 ? tau * u : (tau - 1.0) * u;
}

GradHess pinball_grad_hess(double u, double tau) {
    check_tau(tau);
    check_residual(u);
    // dL/du is tau for u > 0 and tau - 1 for u < 0; at u = 0 the tau - 1
    // side is chosen. Negated for d/dyhat.
    const double dldu = u > 0.0 ? tau : tau - 1.0;
    return {-dldu, 0.0};
}

double arctan_loss(double u, double tau, double s) {
    check_tau(tau);
    check_smoothing(s);
    check_residual(u);
    return (tau - 0.5 + std::atan(u / s) / kPi) * u + s / kPi;
}

GradHess arctan_grad_hess(double u, double tau, double s) {
    check_tau(tau);
    check_smoothing(s);
    check_residual(u);
    const double x = u / s;
    const double one_plus_x2 = 1.0 + x * x;
    const double dldu = tau - 0.5 + std::atan(x) / kPi + x / (kPi * one_plus_x2);
    const double d2ldu2 = 2.0 / (kPi * s) / (one_plus_x2 * one_plus_x2);
    return {-dldu, d2ldu2};
}

LossEval exponential_loss_grad_hess(double u, double tau, double s) {
    check_tau(tau);
    check_smoothing(s);
    check_residual(u);
    const double x = u / s;
    // tau*u + s*log(1+exp(-x)) rewritten as (tau-1)*u + s*log(1+exp(x))
    // for x < 0 so the exponent never overflows.
    double value;
    if (x >= 0.0) {
        value = tau * u + s * std::log1p(std::exp(-x));
    } else {
        value = (tau - 1.0) * u + s * std::log1p(std::exp(x));
    }
    // q = exp(-|x|) never overflows, and sigma(x)*sigma(-x) written as
    // q/(1+q)^2 avoids the 1 - sigma cancellation that would flush the
    // hessian to zero for large |x|.
    const double q = std::exp(-std::fabs(x));
    const double one_plus = 1.0 + q;
    const double dldu = tau - (x >= 0.0 ? q / one_plus : 1.0 / one_plus);
    const double d2ldu2 = q / (one_plus * one_plus) / s;
    return {value, {-dldu, d2ldu2}};
}

LossEval huber_pinball_grad_hess(double u, double tau, double delta) {
    check_tau(tau);
    check_delta(delta);
    check_residual(u);
    const double au = std::fabs(u);
    const double norm = au <= delta ? 0.5 * u * u : au - 0.5 * delta;
    const double dnorm = au <= delta ? u : (u > 0.0 ? 1.0 : -1.0);
    const double side = u > 0.0 ? tau : 1.0 - tau;
    const double value = u == 0.0 ? 0.0 : side * norm;
    const double dldu = u == 0.0 ? 0.0 : side * dnorm;
    double d2ldu2;
    if (u == 0.0) {
        d2ldu2 = 0.5;
    } else if (au <= delta) {
        d2ldu2 = side;
    } else {
        d2ldu2 = 0.0;
    }
    return {value, {-dldu, d2ldu2}};
}

double loss_value(double u, double tau, const LossSpec& spec) {
    switch (spec.kind) {
        case LossKind::pinball: return pinball(u, tau);
        case LossKind::arctan: return arctan_loss(u, tau, spec.s);
        case LossKind::exponential: return exponential_loss_grad_hess(u, tau, spec.s).value;
        case LossKind::huber: return huber_pinball_grad_hess(u, tau, spec.delta).value;
    }
    throw std::logic_error("unreachable loss kind");
}

GradHess loss_grad_hess(double u, double tau, const LossSpec& spec) {
    switch (spec.kind) {
        case LossKind::pinball: return pinball_grad_hess(u, tau);
        case LossKind::arctan: return arctan_grad_hess(u, tau, spec.s);
        case LossKind::exponential: return exponential_loss_grad_hess(u, tau, spec.s).gh;
        case LossKind::huber: return huber_pinball_grad_hess(u, tau, spec.delta).gh;
    }
    throw std::logic_error("unreachable loss kind");
}

GradHessBatch batch_grad_hess(const Matrix& residuals,
                              const QuantileLevels& levels,
                              const LossSpec& spec) {
    spec.validate();
    if (residuals.cols() != levels.size())
        throw std::invalid_argument("residual matrix has " +
                                    std::to_string(residuals.cols()) +
                                    " columns but there are " +
                                    std::to_string(levels.size()) + " levels");
    GradHessBatch out{Matrix(residuals.rows(), residuals.cols()),
                      Matrix(residuals.rows(), residuals.cols())};
    for (std::size_t i = 0; i < residuals.rows(); ++i) {
        for (std::size_t j = 0; j < residuals.cols(); ++j) {
            try {
                const GradHess gh = loss_grad_hess(residuals.at(i, j), levels[j], spec);
                out.grad.at(i, j) = gh.grad;
                out.hess.at(i, j) = gh.hess;
            } catch (const std::exception& e) {
                throw std::invalid_argument("row " + std::to_string(i) +
                                            ", column " + std::to_string(j) +
                                            ": " + e.what());
            }
        }
    }
    return out;
}

}  // namespace qboost
