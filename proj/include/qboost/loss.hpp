#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qboost/matrix.hpp"

namespace qboost {

// Sign convention
// ---------------
// Every loss in this module is a function of the residual u = y - yhat.
// Training consumes derivatives with respect to the prediction yhat, so
// the *_grad_hess operations return d/dyhat and d^2/dyhat^2. Because
// du/dyhat = -1, the returned gradient is the negated u-derivative while
// the Hessian keeps its sign. Loss values themselves are unaffected.

enum class LossKind { pinball, exponential, huber, arctan };

LossKind loss_kind_from_string(const std::string& name);
std::string loss_kind_name(LossKind kind);

// Ordered quantile levels, each strictly inside (0, 1), strictly increasing.
class QuantileLevels {
public:
    explicit QuantileLevels(std::vector<double> levels);

    std::size_t size() const { return levels_.size(); }
    double operator[](std::size_t j) const { return levels_[j]; }
    const std::vector<double>& values() const { return levels_; }

    // Index of the level matching tau (within 1e-12); throws if absent.
    std::size_t index_of(double tau) const;

    bool operator==(const QuantileLevels&) const = default;

private:
    std::vector<double> levels_;
};

// Which pinball approximation to use plus its smoothing parameters.
// s is the smoothing width of the arctan and exponential losses (0.05 by
// default, 0.1 as the documented wider alternative); delta is the Huber
// threshold. The raw pinball kind is valid for evaluation only: its second
// derivative is identically zero, so the booster rejects it as a training
// objective.
struct LossSpec {
    LossKind kind = LossKind::arctan;
    double s = 0.05;
    double delta = 1.0;

    void validate() const;
};

// First and second derivative of a loss with respect to the prediction.
struct GradHess {
    double grad = 0.0;
    double hess = 0.0;
};

struct LossEval {
    double value = 0.0;
    GradHess gh;
};

// Raw pinball loss: tau*u for u >= 0, (tau-1)*u for u < 0.
double pinball(double u, double tau);

// Pinball subgradient w.r.t. yhat. At u = 0 the (tau-1)-side subgradient
// is used, i.e. grad = 1 - tau; the Hessian is identically zero. Training
// never uses this; it exists to complete the family for diagnostics.
GradHess pinball_grad_hess(double u, double tau);

// Smooth approximation (tau - 0.5 + atan(u/s)/pi)*u + s/pi. The s/pi term
// cancels the asymptotic bias for large |u|.
double arctan_loss(double u, double tau, double s);

// d/dyhat and d^2/dyhat^2 of arctan_loss. The second derivative
// 2/(pi*s) * (1 + (u/s)^2)^-2 is strictly positive and decays
// polynomially in |u|.
GradHess arctan_grad_hess(double u, double tau, double s);

// tau*u + s*log(1 + exp(-u/s)), evaluated through the log1p branch that
// cannot overflow for u/s << 0. Second derivative decays exponentially.
LossEval exponential_loss_grad_hess(double u, double tau, double s);

// tau * n_delta(u) for u > 0 and (1-tau) * n_delta(u) for u < 0 where
// n_delta is the Huber norm. Hessian: tau on (0, delta], 1-tau on
// [-delta, 0), 1/2 at u = 0, and zero beyond |u| > delta.
LossEval huber_pinball_grad_hess(double u, double tau, double delta);

// Dispatch by spec.kind.
double loss_value(double u, double tau, const LossSpec& spec);
GradHess loss_grad_hess(double u, double tau, const LossSpec& spec);

struct GradHessBatch {
    Matrix grad;
    Matrix hess;
};

// Elementwise loss_grad_hess over a residual matrix; column j uses
// levels[j]. Per-element failures are rethrown with the row and column.
GradHessBatch batch_grad_hess(const Matrix& residuals,
                              const QuantileLevels& levels,
                              const LossSpec& spec);

}  // namespace qboost
