#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qboost/loss.hpp"
#include "qboost/matrix.hpp"

namespace qboost {

struct ReliabilityPoint {
    double tau = 0.0;
    double fraction = 0.0;  // empirical share of targets strictly below
};

struct EvalReport {
    double coverage_pct = 0.0;
    double mean_width = 0.0;
    double avg_pinball = 0.0;
    double crossing_pct = 0.0;
    std::vector<ReliabilityPoint> reliability;
    std::size_t n = 0;
};

// Share of targets inside the closed interval [pred_lo, pred_hi] (percent)
// and the mean signed interval width. Crossed pairs contribute negative
// widths as-is.
std::pair<double, double> coverage_and_width(std::span<const double> y,
                                             const Matrix& preds,
                                             const QuantileLevels& levels,
                                             double lo_tau, double hi_tau);

// Pinball loss averaged over all rows and all levels.
double average_pinball(std::span<const double> y, const Matrix& preds,
                       const QuantileLevels& levels);

// Percentage of adjacent level pairs with pred_j > pred_{j+1}; ties are
// not crossings.
double crossing_percentage(const Matrix& preds, const QuantileLevels& levels);

// One (tau, fraction of y strictly below the predicted tau-quantile) point
// per level.
std::vector<ReliabilityPoint> reliability_points(std::span<const double> y,
                                                 const Matrix& preds,
                                                 const QuantileLevels& levels);

EvalReport evaluate(std::span<const double> y, const Matrix& preds,
                    const QuantileLevels& levels, double lo_tau, double hi_tau);

std::string report_to_json_string(const EvalReport& report);
std::string report_csv_header();
std::string report_csv_row(const EvalReport& report);
std::string reliability_csv(const EvalReport& report);

}  // namespace qboost
