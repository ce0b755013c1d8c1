#pragma once

// Test-only oracles: brute-force and finite-difference reference
// implementations kept independent of the library code paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "qboost/matrix.hpp"
#include "qboost/tree.hpp"

namespace oracles {

// Derivatives w.r.t. the prediction: raising yhat by h lowers u by h.
template <typename LossFn>
double fd_grad_wrt_pred(LossFn loss, double u, double h) {
    return (loss(u - h) - loss(u + h)) / (2.0 * h);
}

template <typename LossFn>
double fd_hess_wrt_pred(LossFn loss, double u, double h) {
    return (loss(u - h) - 2.0 * loss(u) + loss(u + h)) / (h * h);
}

template <typename F>
double golden_section_min(F f, double a, double b, int iters = 200) {
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - phi * (b - a);
    double d = a + phi * (b - a);
    for (int i = 0; i < iters; ++i) {
        if (f(c) < f(d)) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    return 0.5 * (a + b);
}

inline double brute_pinball(double u, double tau) {
    return u >= 0.0 ? tau * u : (tau - 1.0) * u;
}

inline double brute_average_pinball(const std::vector<double>& y,
                                    const qboost::Matrix& preds,
                                    const std::vector<double>& levels) {
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < levels.size(); ++j)
            sum += brute_pinball(y[i] - preds.at(i, j), levels[j]);
    return sum / (static_cast<double>(y.size()) * static_cast<double>(levels.size()));
}

inline double brute_coverage_pct(const std::vector<double>& y,
                                 const qboost::Matrix& preds, std::size_t lo,
                                 std::size_t hi) {
    std::size_t inside = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] >= preds.at(i, lo) && y[i] <= preds.at(i, hi)) ++inside;
    return 100.0 * static_cast<double>(inside) / static_cast<double>(y.size());
}

inline double brute_mean_width(const qboost::Matrix& preds, std::size_t lo,
                               std::size_t hi) {
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.rows(); ++i)
        sum += preds.at(i, hi) - preds.at(i, lo);
    return sum / static_cast<double>(preds.rows());
}

inline std::size_t brute_crossing_count(const qboost::Matrix& preds) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < preds.rows(); ++i)
        for (std::size_t j = 0; j + 1 < preds.cols(); ++j)
            if (preds.at(i, j) > preds.at(i, j + 1)) ++count;
    return count;
}

inline double brute_crossing_pct(const qboost::Matrix& preds) {
    return 100.0 * static_cast<double>(brute_crossing_count(preds)) /
           (static_cast<double>(preds.cols() - 1) *
            static_cast<double>(preds.rows()));
}

inline double brute_reliability_fraction(const std::vector<double>& y,
                                         const qboost::Matrix& preds,
                                         std::size_t j) {
    std::size_t below = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < preds.at(i, j)) ++below;
    return static_cast<double>(below) / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------
// Brute-force search over all trees of depth <= 2 (a lone leaf or one
// split) for the quadratic boosting objective
//   sum_leaves sum_j [G_j w_j + 1/2 (H_j + lambda) w_j^2] + gamma * T
// with the Newton weights w_j = -G_j / (H_j + lambda).

struct LeafSums {
    std::vector<double> grad;
    std::vector<double> hess;
};

inline LeafSums sum_rows(const std::vector<std::size_t>& rows,
                         const qboost::Matrix& grad, const qboost::Matrix& hess) {
    LeafSums sums{std::vector<double>(grad.cols(), 0.0),
                  std::vector<double>(grad.cols(), 0.0)};
    for (std::size_t r : rows)
        for (std::size_t j = 0; j < grad.cols(); ++j) {
            sums.grad[j] += grad.at(r, j);
            sums.hess[j] += hess.at(r, j);
        }
    return sums;
}

inline double leaf_objective(const LeafSums& sums, double lambda) {
    double obj = 0.0;
    for (std::size_t j = 0; j < sums.grad.size(); ++j) {
        const double w = -sums.grad[j] / (sums.hess[j] + lambda);
        obj += sums.grad[j] * w + 0.5 * (sums.hess[j] + lambda) * w * w;
    }
    return obj;
}

inline double partition_objective(
    const std::vector<std::vector<std::size_t>>& leaves,
    const qboost::Matrix& grad, const qboost::Matrix& hess, double lambda,
    double gamma) {
    double obj = gamma * static_cast<double>(leaves.size());
    for (const auto& rows : leaves) obj += leaf_objective(sum_rows(rows, grad, hess), lambda);
    return obj;
}

// Objective of an already-built tree, using its stored leaf weights and
// only the public routing surface.
inline double tree_objective(const qboost::Tree& tree,
                             const qboost::Matrix& features,
                             const std::vector<std::uint8_t>& missing,
                             const qboost::Matrix& grad,
                             const qboost::Matrix& hess, double lambda,
                             double gamma) {
    std::vector<LeafSums> per_leaf(
        tree.nodes.size(),
        LeafSums{std::vector<double>(grad.cols(), 0.0),
                 std::vector<double>(grad.cols(), 0.0)});
    for (std::size_t r = 0; r < features.rows(); ++r) {
        std::span<const std::uint8_t> miss(missing.data() + r * features.cols(),
                                           features.cols());
        const std::size_t leaf = qboost::tree_leaf_index(tree, features.row(r), miss);
        for (std::size_t j = 0; j < grad.cols(); ++j) {
            per_leaf[leaf].grad[j] += grad.at(r, j);
            per_leaf[leaf].hess[j] += hess.at(r, j);
        }
    }
    double obj = gamma * static_cast<double>(tree.leaf_count);
    for (std::size_t idx = 0; idx < tree.nodes.size(); ++idx) {
        if (!tree.nodes[idx].is_leaf) continue;
        const std::vector<double>& w = tree.nodes[idx].weights;
        for (std::size_t j = 0; j < w.size(); ++j)
            obj += per_leaf[idx].grad[j] * w[j] +
                   0.5 * (per_leaf[idx].hess[j] + lambda) * w[j] * w[j];
    }
    return obj;
}

// Minimum objective over the lone leaf and every single split whose
// threshold is a midpoint of consecutive distinct present values, trying
// missing rows on both sides.
inline double best_depth2_objective(const qboost::Matrix& features,
                                    const std::vector<std::uint8_t>& missing,
                                    const qboost::Matrix& grad,
                                    const qboost::Matrix& hess, double lambda,
                                    double gamma) {
    const std::size_t n = features.rows();
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    double best = partition_objective({all}, grad, hess, lambda, gamma);

    for (std::size_t f = 0; f < features.cols(); ++f) {
        std::vector<double> values;
        std::vector<std::size_t> missing_rows;
        for (std::size_t r = 0; r < n; ++r) {
            if (missing[r * features.cols() + f]) {
                missing_rows.push_back(r);
            } else {
                values.push_back(features.at(r, f));
            }
        }
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t v = 0; v + 1 < values.size(); ++v) {
            double thr = values[v] + (values[v + 1] - values[v]) / 2.0;
            if (!(thr > values[v])) thr = values[v + 1];
            for (int miss_left = 0; miss_left < 2; ++miss_left) {
                std::vector<std::size_t> left, right;
                for (std::size_t r = 0; r < n; ++r) {
                    bool go_left;
                    if (missing[r * features.cols() + f]) {
                        go_left = miss_left == 1;
                    } else {
                        go_left = features.at(r, f) < thr;
                    }
                    (go_left ? left : right).push_back(r);
                }
                if (left.empty() || right.empty()) continue;
                best = std::min(best, partition_objective({left, right}, grad,
                                                          hess, lambda, gamma));
            }
        }
    }
    return best;
}

}  // namespace oracles
