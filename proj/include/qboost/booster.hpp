#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qboost/dataset.hpp"
#include "qboost/loss.hpp"
#include "qboost/matrix.hpp"
#include "qboost/tree.hpp"

namespace qboost {

// The ten levels 0.05, 0.15, ..., 0.95.
QuantileLevels default_levels();

// Training configuration. The defaults are the recommended settings for
// the arctan loss: s = 0.05, learning rate 0.05, min_child_weight 0 and
// max_delta_step 0.5.
struct BoosterConfig {
    int n_estimators = 400;
    double learning_rate = 0.05;
    LossSpec loss;
    QuantileLevels levels = default_levels();
    TreeParams tree{.max_depth = 3,
                    .lambda = 1.0,
                    .gamma = 0.0,
                    .min_child_weight = 0.0,
                    .max_delta_step = 0.5};
    enum class BaseScore { empirical_quantiles, zeros };
    BaseScore base_score_mode = BaseScore::empirical_quantiles;
    std::uint64_t seed = 0;

    void validate() const;
};

// A fitted ensemble: prediction = base_scores + learning_rate * sum of
// tree outputs, destandardized when a standardization snapshot exists.
struct Model {
    std::vector<Tree> trees;
    std::vector<double> base_scores;
    double learning_rate = 0.05;
    QuantileLevels levels = default_levels();
    std::optional<Standardization> standardization;
    std::vector<std::string> feature_names;
    BoosterConfig config;
};

struct IterationStat {
    int iteration = 0;       // 1-based tree index
    double avg_pinball = 0;  // true composite pinball loss on the training set
};

struct FitResult {
    Model model;
    std::vector<IterationStat> log;
};

// Newton boosting: each round fits one multi-output tree to the gradients
// and Hessians of the smooth loss at the current predictions. The training
// log records the raw (unsmoothed) pinball loss averaged over rows and
// levels after each round.
FitResult fit(const Dataset& ds, const BoosterConfig& cfg);

// Predictions in original target units, one column per level. missing may
// be null when the feature block has no gaps.
Matrix predict(const Model& model, const Matrix& features,
               const std::vector<std::uint8_t>* missing);
Matrix predict(const Model& model, const Dataset& ds);

struct PointUpdate {
    std::vector<double> updated;
    bool crossed = false;  // any adjacent pair inverted after the update
};

// One Newton step q_j -> q_j - eta * g_j / (h_j + lambda) for a leaf
// containing the single observation y. This is the update that drives the
// quantile-crossing scenarios.
PointUpdate single_point_update(double y, std::span<const double> q_hats,
                                const QuantileLevels& levels,
                                const LossSpec& loss, double lambda,
                                double eta = 1.0);

struct CrossingScenarioRow {
    int scenario = 0;
    std::string label;
    double gap = 0.0;
    std::vector<double> before;
    std::vector<double> after;
    bool crossed = false;
};

// Three canonical two-quantile configurations around a single observation
// at y = 0, evaluated over a scan of gap sizes:
//   1. lower quantile far below y, upper slightly above
//   2. both quantiles equidistant from y
//   3. both quantiles above y, upper further away
std::vector<CrossingScenarioRow> crossing_scenarios(
    const QuantileLevels& two_levels, const LossSpec& loss, double lambda,
    double eta, std::span<const double> gaps);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);
std::string model_to_json_string(const Model& model);

}  // namespace qboost
