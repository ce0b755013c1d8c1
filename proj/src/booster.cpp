#include "qboost/booster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace qboost {

using nlohmann::json;

QuantileLevels default_levels() {
    return QuantileLevels{{0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95}};
}

void BoosterConfig::validate() const {
    if (n_estimators < 1)
        throw std::invalid_argument("n_estimators must be at least 1");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("learning_rate must be positive");
    loss.validate();
    if (loss.kind == LossKind::pinball)
        throw std::invalid_argument(
            "the raw pinball loss has a zero second derivative and cannot be "
            "used as a training objective; pick arctan, exponential or huber");
    tree.validate();
}

namespace {

std::vector<double> compute_base_scores(const BoosterConfig& cfg,
                                        const std::vector<double>& targets) {
    std::vector<double> base(cfg.levels.size(), 0.0);
    if (cfg.base_score_mode == BoosterConfig::BaseScore::empirical_quantiles) {
        for (std::size_t j = 0; j < cfg.levels.size(); ++j)
            base[j] = empirical_quantile(targets, cfg.levels[j]);
    }
    return base;
}

double average_true_pinball(const std::vector<double>& targets,
                            const Matrix& preds, const QuantileLevels& levels) {
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.rows(); ++i)
        for (std::size_t j = 0; j < preds.cols(); ++j)
            sum += pinball(targets[i] - preds.at(i, j), levels[j]);
    return sum / (static_cast<double>(preds.rows()) *
                  static_cast<double>(preds.cols()));
}

}  // namespace

FitResult fit(const Dataset& ds, const BoosterConfig& cfg) {
    cfg.validate();
    if (ds.n_rows() == 0) throw std::invalid_argument("fit: empty dataset");
    if (!ds.standardization)
        std::cerr << "warning: training on targets without a standardization "
                     "snapshot; the smoothing parameter assumes unit-scale "
                     "targets\n";

    const std::size_t n = ds.n_rows();
    const std::size_t n_levels = cfg.levels.size();

    Model model;
    model.base_scores = compute_base_scores(cfg, ds.targets);
    model.learning_rate = cfg.learning_rate;
    model.levels = cfg.levels;
    model.standardization = ds.standardization;
    model.feature_names = ds.feature_names;
    model.config = cfg;
    model.trees.reserve(static_cast<std::size_t>(cfg.n_estimators));

    Matrix preds(n, n_levels);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n_levels; ++j)
            preds.at(i, j) = model.base_scores[j];

    std::vector<std::size_t> all_rows(n);
    std::iota(all_rows.begin(), all_rows.end(), 0);

    std::vector<IterationStat> log;
    log.reserve(static_cast<std::size_t>(cfg.n_estimators));

    Matrix residuals(n, n_levels);
    for (int t = 1; t <= cfg.n_estimators; ++t) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n_levels; ++j)
                residuals.at(i, j) = ds.targets[i] - preds.at(i, j);
        GradHessBatch batch;
        try {
            batch = batch_grad_hess(residuals, cfg.levels, cfg.loss);
        } catch (const std::exception& e) {
            throw std::runtime_error("iteration " + std::to_string(t) + ": " +
                                     e.what());
        }
        Tree tree = build_tree(all_rows, ds.features, &ds.missing, batch.grad,
                               batch.hess, cfg.tree);
        for (std::size_t i = 0; i < n; ++i) {
            const std::vector<double>& w = tree_predict(
                tree, ds.features.row(i),
                std::span<const std::uint8_t>(ds.missing.data() + i * ds.n_features(),
                                              ds.n_features()));
            for (std::size_t j = 0; j < n_levels; ++j)
                preds.at(i, j) += cfg.learning_rate * w[j];
        }
        model.trees.push_back(std::move(tree));
        log.push_back({t, average_true_pinball(ds.targets, preds, cfg.levels)});
    }
    return {std::move(model), std::move(log)};
}

Matrix predict(const Model& model, const Matrix& features,
               const std::vector<std::uint8_t>* missing) {
    if (features.cols() != model.feature_names.size())
        throw std::invalid_argument(
            "predict: feature width " + std::to_string(features.cols()) +
            " does not match training width " +
            std::to_string(model.feature_names.size()));
    const std::size_t n = features.rows();
    const std::size_t n_levels = model.levels.size();
    Matrix preds(n, n_levels);
    static const std::vector<std::uint8_t> no_missing;
    for (std::size_t i = 0; i < n; ++i) {
        std::span<const std::uint8_t> miss_row =
            missing ? std::span<const std::uint8_t>(
                          missing->data() + i * features.cols(), features.cols())
                    : std::span<const std::uint8_t>(no_missing);
        for (std::size_t j = 0; j < n_levels; ++j)
            preds.at(i, j) = model.base_scores[j];
        for (const Tree& tree : model.trees) {
            const std::vector<double>& w = tree_predict(tree, features.row(i), miss_row);
            for (std::size_t j = 0; j < n_levels; ++j)
                preds.at(i, j) += model.learning_rate * w[j];
        }
    }
    if (model.standardization)
        return destandardize_predictions(preds, *model.standardization);
    return preds;
}

Matrix predict(const Model& model, const Dataset& ds) {
    return predict(model, ds.features, &ds.missing);
}

PointUpdate single_point_update(double y, std::span<const double> q_hats,
                                const QuantileLevels& levels,
                                const LossSpec& loss, double lambda,
                                double eta) {
    loss.validate();
    if (loss.kind == LossKind::pinball)
        throw std::invalid_argument("single_point_update needs a smooth loss");
    if (q_hats.size() != levels.size())
        throw std::invalid_argument("single_point_update: level count mismatch");
    PointUpdate out;
    out.updated.resize(q_hats.size());
    for (std::size_t j = 0; j < q_hats.size(); ++j) {
        const GradHess gh = loss_grad_hess(y - q_hats[j], levels[j], loss);
        const double denom = gh.hess + lambda;
        if (!(denom > 0.0))
            throw std::invalid_argument(
                "single_point_update: hessian plus lambda must be positive");
        out.updated[j] = q_hats[j] - eta * gh.grad / denom;
    }
    for (std::size_t j = 0; j + 1 < out.updated.size(); ++j)
        if (out.updated[j] > out.updated[j + 1]) out.crossed = true;
    return out;
}

std::vector<CrossingScenarioRow> crossing_scenarios(
    const QuantileLevels& two_levels, const LossSpec& loss, double lambda,
    double eta, std::span<const double> gaps) {
    if (two_levels.size() != 2)
        throw std::invalid_argument("crossing_scenarios expects exactly 2 levels");
    static const char* labels[3] = {"different_grad_and_hess", "different_grad",
                                    "different_hess"};
    std::vector<CrossingScenarioRow> rows;
    for (int scenario = 1; scenario <= 3; ++scenario) {
        for (double gap : gaps) {
            std::vector<double> before(2);
            switch (scenario) {
                case 1:  // lower quantile far below y, upper slightly above
                    before = {-gap, 0.1};
                    break;
                case 2:  // symmetric around y
                    before = {-gap, gap};
                    break;
                case 3:  // both above y, upper further away
                    before = {0.5 * gap, gap};
                    break;
            }
            PointUpdate update =
                single_point_update(0.0, before, two_levels, loss, lambda, eta);
            rows.push_back({scenario, labels[scenario - 1], gap, before,
                            std::move(update.updated), update.crossed});
        }
    }
    return rows;
}

namespace {

constexpr int kFormatVersion = 1;

json node_to_json(const Tree& tree, int idx) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    if (node.is_leaf) return json{{"weights", node.weights}};
    return json{{"feature", node.feature},
                {"threshold", node.threshold},
                {"default_left", node.default_left},
                {"left", node_to_json(tree, node.left)},
                {"right", node_to_json(tree, node.right)}};
}

int node_from_json(const json& j, Tree& tree, int depth, int& max_depth) {
    max_depth = std::max(max_depth, depth);
    const int idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("weights")) {
        tree.nodes[idx].is_leaf = true;
        tree.nodes[idx].weights = j.at("weights").get<std::vector<double>>();
        ++tree.leaf_count;
        return idx;
    }
    tree.nodes[idx].is_leaf = false;
    tree.nodes[idx].feature = j.at("feature").get<int>();
    tree.nodes[idx].threshold = j.at("threshold").get<double>();
    tree.nodes[idx].default_left = j.at("default_left").get<bool>();
    const int left = node_from_json(j.at("left"), tree, depth + 1, max_depth);
    const int right = node_from_json(j.at("right"), tree, depth + 1, max_depth);
    tree.nodes[idx].left = left;
    tree.nodes[idx].right = right;
    return idx;
}

json double_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

double double_from(const json& j) {
    if (j.is_null()) return std::numeric_limits<double>::infinity();
    return j.get<double>();
}

json config_to_json(const BoosterConfig& cfg) {
    return json{
        {"n_estimators", cfg.n_estimators},
        {"learning_rate", cfg.learning_rate},
        {"loss",
         {{"kind", loss_kind_name(cfg.loss.kind)}, {"s", cfg.loss.s}, {"delta", cfg.loss.delta}}},
        {"base_score_mode",
         cfg.base_score_mode == BoosterConfig::BaseScore::empirical_quantiles
             ? "empirical_quantiles"
             : "zeros"},
        {"seed", cfg.seed},
        {"tree",
         {{"max_depth", cfg.tree.max_depth},
          {"lambda", cfg.tree.lambda},
          {"gamma", cfg.tree.gamma},
          {"min_child_weight", cfg.tree.min_child_weight},
          {"max_delta_step", double_or_null(cfg.tree.max_delta_step)}}}};
}

BoosterConfig config_from_json(const json& j, const QuantileLevels& levels) {
    BoosterConfig cfg;
    cfg.n_estimators = j.at("n_estimators").get<int>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.loss.kind = loss_kind_from_string(j.at("loss").at("kind").get<std::string>());
    cfg.loss.s = j.at("loss").at("s").get<double>();
    cfg.loss.delta = j.at("loss").at("delta").get<double>();
    cfg.levels = levels;
    cfg.base_score_mode =
        j.at("base_score_mode").get<std::string>() == "zeros"
            ? BoosterConfig::BaseScore::zeros
            : BoosterConfig::BaseScore::empirical_quantiles;
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.tree.max_depth = j.at("tree").at("max_depth").get<int>();
    cfg.tree.lambda = j.at("tree").at("lambda").get<double>();
    cfg.tree.gamma = j.at("tree").at("gamma").get<double>();
    cfg.tree.min_child_weight = j.at("tree").at("min_child_weight").get<double>();
    cfg.tree.max_delta_step = double_from(j.at("tree").at("max_delta_step"));
    return cfg;
}

}  // namespace

std::string model_to_json_string(const Model& model) {
    json j;
    j["format_version"] = kFormatVersion;
    j["levels"] = model.levels.values();
    j["base_scores"] = model.base_scores;
    j["learning_rate"] = model.learning_rate;
    if (model.standardization) {
        j["standardization"] = {{"mean", model.standardization->mean},
                                {"std", model.standardization->std}};
    } else {
        j["standardization"] = nullptr;
    }
    j["feature_names"] = model.feature_names;
    j["config"] = config_to_json(model.config);
    json trees = json::array();
    for (const Tree& tree : model.trees) trees.push_back(node_to_json(tree, 0));
    j["trees"] = std::move(trees);
    return j.dump(2);
}

void save_model(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << model_to_json_string(model) << '\n';
    if (!out) throw std::runtime_error("failed writing " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed model file " + path + ": " + e.what());
    }
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kFormatVersion)
            throw std::runtime_error("unsupported model format version " +
                                     std::to_string(version));
        Model model;
        model.levels = QuantileLevels{j.at("levels").get<std::vector<double>>()};
        model.base_scores = j.at("base_scores").get<std::vector<double>>();
        model.learning_rate = j.at("learning_rate").get<double>();
        if (!j.at("standardization").is_null()) {
            model.standardization =
                Standardization{j.at("standardization").at("mean").get<double>(),
                                j.at("standardization").at("std").get<double>()};
        }
        model.feature_names =
            j.at("feature_names").get<std::vector<std::string>>();
        model.config = config_from_json(j.at("config"), model.levels);
        for (const json& tj : j.at("trees")) {
            Tree tree;
            int max_depth = 0;
            node_from_json(tj, tree, 1, max_depth);
            tree.depth = max_depth;
            model.trees.push_back(std::move(tree));
        }
        return model;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed model file " + path + ": " + e.what());
    }
}

}  // namespace qboost
