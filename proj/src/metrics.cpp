#include "qboost/metrics.hpp"

#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "qboost/dataset.hpp"

namespace qboost {

namespace {

void check_shapes(std::span<const double> y, const Matrix& preds,
                  const QuantileLevels& levels) {
    if (preds.rows() != y.size())
        throw std::invalid_argument("prediction rows do not match target count");
    if (preds.cols() != levels.size())
        throw std::invalid_argument("prediction columns do not match level count");
    if (y.empty()) throw std::invalid_argument("empty evaluation set");
}

}  // namespace

std::pair<double, double> coverage_and_width(std::span<const double> y,
                                             const Matrix& preds,
                                             const QuantileLevels& levels,
                                             double lo_tau, double hi_tau) {
    check_shapes(y, preds, levels);
    if (!(lo_tau < hi_tau))
        throw std::invalid_argument("lo_tau must be below hi_tau");
    const std::size_t lo = levels.index_of(lo_tau);
    const std::size_t hi = levels.index_of(hi_tau);
    std::size_t covered = 0;
    double width_sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = preds.at(i, lo);
        const double b = preds.at(i, hi);
        if (y[i] >= a && y[i] <= b) ++covered;
        width_sum += b - a;
    }
    const double n = static_cast<double>(y.size());
    return {100.0 * static_cast<double>(covered) / n, width_sum / n};
}

double average_pinball(std::span<const double> y, const Matrix& preds,
                       const QuantileLevels& levels) {
    check_shapes(y, preds, levels);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < levels.size(); ++j)
            sum += pinball(y[i] - preds.at(i, j), levels[j]);
    return sum / (static_cast<double>(y.size()) * static_cast<double>(levels.size()));
}

double crossing_percentage(const Matrix& preds, const QuantileLevels& levels) {
    if (levels.size() < 2)
        throw std::invalid_argument("crossing percentage needs at least 2 levels");
    if (preds.cols() != levels.size())
        throw std::invalid_argument("prediction columns do not match level count");
    if (preds.rows() == 0) throw std::invalid_argument("empty prediction matrix");
    std::size_t crossings = 0;
    for (std::size_t i = 0; i < preds.rows(); ++i)
        for (std::size_t j = 0; j + 1 < preds.cols(); ++j)
            if (preds.at(i, j) > preds.at(i, j + 1)) ++crossings;
    return 100.0 * static_cast<double>(crossings) /
           (static_cast<double>(levels.size() - 1) * static_cast<double>(preds.rows()));
}

std::vector<ReliabilityPoint> reliability_points(std::span<const double> y,
                                                 const Matrix& preds,
                                                 const QuantileLevels& levels) {
    check_shapes(y, preds, levels);
    std::vector<ReliabilityPoint> points(levels.size());
    for (std::size_t j = 0; j < levels.size(); ++j) {
        std::size_t below = 0;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] < preds.at(i, j)) ++below;
        points[j] = {levels[j],
                     static_cast<double>(below) / static_cast<double>(y.size())};
    }
    return points;
}

EvalReport evaluate(std::span<const double> y, const Matrix& preds,
                    const QuantileLevels& levels, double lo_tau, double hi_tau) {
    EvalReport report;
    const auto [coverage, width] = coverage_and_width(y, preds, levels, lo_tau, hi_tau);
    report.coverage_pct = coverage;
    report.mean_width = width;
    report.avg_pinball = average_pinball(y, preds, levels);
    report.crossing_pct = crossing_percentage(preds, levels);
    report.reliability = reliability_points(y, preds, levels);
    report.n = y.size();
    return report;
}

std::string report_to_json_string(const EvalReport& report) {
    nlohmann::json j;
    j["n"] = report.n;
    j["coverage_pct"] = report.coverage_pct;
    j["mean_width"] = report.mean_width;
    j["avg_pinball"] = report.avg_pinball;
    j["crossing_pct"] = report.crossing_pct;
    nlohmann::json rel = nlohmann::json::array();
    for (const auto& p : report.reliability)
        rel.push_back({{"tau", p.tau}, {"fraction", p.fraction}});
    j["reliability"] = std::move(rel);
    return j.dump(2);
}

std::string report_csv_header() {
    return "n,coverage_pct,mean_width,avg_pinball,crossing_pct";
}

std::string report_csv_row(const EvalReport& report) {
    std::ostringstream os;
    os << report.n << ',' << format_number(report.coverage_pct) << ','
       << format_number(report.mean_width) << ','
       << format_number(report.avg_pinball) << ','
       << format_number(report.crossing_pct);
    return os.str();
}

std::string reliability_csv(const EvalReport& report) {
    std::ostringstream os;
    os << "tau,fraction\n";
    for (const auto& p : report.reliability)
        os << format_number(p.tau) << ',' << format_number(p.fraction) << '\n';
    return os.str();
}

}  // namespace qboost
