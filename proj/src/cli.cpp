#include "qboost/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qboost/booster.hpp"
#include "qboost/dataset.hpp"
#include "qboost/metrics.hpp"
#include "qboost/tune.hpp"

namespace qboost {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kDefaultLevels =
    "0.05,0.15,0.25,0.35,0.45,0.55,0.65,0.75,0.85,0.95";

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty())
            throw std::runtime_error("empty entry in list '" + text + "'");
        values.push_back(std::stod(item));
    }
    if (values.empty()) throw std::runtime_error("empty list '" + text + "'");
    return values;
}

QuantileLevels parse_levels(const std::string& text) {
    return QuantileLevels{parse_double_list(text)};
}

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

void require_value(const std::string& value, const char* flag) {
    if (value.empty())
        throw std::runtime_error(std::string(flag) +
                                 " is required (flag or config file)");
}

void write_text_file(const std::string& path, const std::string& content) {
    ensure_parent_dir(path);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
    if (!out) throw std::runtime_error("failed writing " + path);
}

// Fills in values from a JSON config file for every bound option the user
// did not pass on the command line. Keys are the long flag names with
// hyphens replaced by underscores.
class ConfigBinder {
public:
    explicit ConfigBinder(CLI::App* cmd) : cmd_(cmd) {
        cmd->add_option("--config", config_path_,
                        "JSON file with defaults; explicit flags win");
    }

    template <typename T>
    void bind(const std::string& flag, T& var) {
        setters_.emplace_back(flag, [&var](const json& v) { var = v.get<T>(); });
    }

    void apply() const {
        if (config_path_.empty()) return;
        std::ifstream in(config_path_);
        if (!in) throw std::runtime_error("cannot open " + config_path_);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw std::runtime_error("malformed config file " + config_path_ +
                                     ": " + e.what());
        }
        for (const auto& [flag, setter] : setters_) {
            std::string key = flag;
            for (char& ch : key)
                if (ch == '-') ch = '_';
            if (cmd_->count("--" + flag) == 0 && j.contains(key)) setter(j.at(key));
        }
    }

private:
    CLI::App* cmd_;
    std::string config_path_;
    std::vector<std::pair<std::string, std::function<void(const json&)>>> setters_;
};

// Flags shared by train and tune.
struct BoosterFlags {
    std::string levels = kDefaultLevels;
    std::string loss = "arctan";
    double s = 0.05;
    double delta = 1.0;
    double learning_rate = 0.05;
    double max_delta_step = 0.5;
    double min_child_weight = 0.0;
    std::string base_score = "empirical_quantiles";
    std::uint64_t seed = 0;

    void add_options(CLI::App* cmd, ConfigBinder& binder) {
        cmd->add_option("--levels", levels, "comma-separated quantile levels");
        cmd->add_option("--loss", loss, "arctan, exponential or huber")
            ->check(CLI::IsMember({"arctan", "exponential", "huber", "pinball"}));
        cmd->add_option("--s", s, "smoothing width for arctan/exponential");
        cmd->add_option("--delta", delta, "huber threshold");
        cmd->add_option("--learning-rate", learning_rate, "shrinkage per tree");
        cmd->add_option("--max-delta-step", max_delta_step, "leaf weight cap");
        cmd->add_option("--min-child-weight", min_child_weight,
                        "minimum hessian sum per child");
        cmd->add_option("--base-score", base_score,
                        "empirical_quantiles or zeros")
            ->check(CLI::IsMember({"empirical_quantiles", "zeros"}));
        cmd->add_option("--seed", seed, "random seed");
        binder.bind("levels", levels);
        binder.bind("loss", loss);
        binder.bind("s", s);
        binder.bind("delta", delta);
        binder.bind("learning-rate", learning_rate);
        binder.bind("max-delta-step", max_delta_step);
        binder.bind("min-child-weight", min_child_weight);
        binder.bind("base-score", base_score);
        binder.bind("seed", seed);
    }

    BoosterConfig to_config() const {
        BoosterConfig cfg;
        cfg.levels = parse_levels(levels);
        cfg.loss.kind = loss_kind_from_string(loss);
        cfg.loss.s = s;
        cfg.loss.delta = delta;
        cfg.learning_rate = learning_rate;
        cfg.tree.max_delta_step = max_delta_step;
        cfg.tree.min_child_weight = min_child_weight;
        cfg.base_score_mode = base_score == "zeros"
                                  ? BoosterConfig::BaseScore::zeros
                                  : BoosterConfig::BaseScore::empirical_quantiles;
        cfg.seed = seed;
        return cfg;
    }
};

std::string predictions_header(const QuantileLevels& levels) {
    std::string header;
    for (std::size_t j = 0; j < levels.size(); ++j) {
        if (j > 0) header += ',';
        header += 'q' + format_number(levels[j]);
    }
    return header;
}

void write_predictions_csv(const std::string& path, const Matrix& preds,
                           const QuantileLevels& levels) {
    std::ostringstream os;
    os << predictions_header(levels) << '\n';
    for (std::size_t i = 0; i < preds.rows(); ++i) {
        for (std::size_t j = 0; j < preds.cols(); ++j) {
            if (j > 0) os << ',';
            os << format_number(preds.at(i, j));
        }
        os << '\n';
    }
    write_text_file(path, os.str());
}

int cmd_toy(std::size_t n, std::uint64_t seed, const std::string& levels_text,
            const std::string& out_dir) {
    const QuantileLevels levels = parse_levels(levels_text);
    fs::create_directories(out_dir);
    Dataset train = make_toy(n, seed);
    Dataset test = make_toy(n, seed + 1);
    write_csv(train, (fs::path(out_dir) / "train.csv").string());
    write_csv(test, (fs::path(out_dir) / "test.csv").string());

    std::ostringstream os;
    os << "x";
    for (std::size_t j = 0; j < levels.size(); ++j)
        os << ",q" << format_number(levels[j]);
    os << '\n';
    for (int i = 0; i <= 100; ++i) {
        const double x = static_cast<double>(i) / 100.0;
        os << format_number(x);
        for (std::size_t j = 0; j < levels.size(); ++j)
            os << ',' << format_number(true_toy_quantile(x, levels[j]));
        os << '\n';
    }
    write_text_file((fs::path(out_dir) / "true_quantiles.csv").string(), os.str());
    std::cerr << "wrote " << out_dir << "/{train,test,true_quantiles}.csv\n";
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& target,
              const std::string& missing_token, const BoosterFlags& flags,
              int n_estimators, double lambda, double gamma, int max_depth,
              const std::string& out_path, const std::string& log_path) {
    BoosterConfig cfg = flags.to_config();
    cfg.n_estimators = n_estimators;
    cfg.tree.lambda = lambda;
    cfg.tree.gamma = gamma;
    cfg.tree.max_depth = max_depth;

    Dataset ds = standardize_targets(load_csv(data_path, target, missing_token));
    FitResult result = fit(ds, cfg);
    ensure_parent_dir(out_path);
    save_model(result.model, out_path);

    std::ostringstream os;
    os << "iteration,avg_pinball\n";
    for (const IterationStat& stat : result.log)
        os << stat.iteration << ',' << format_number(stat.avg_pinball) << '\n';
    write_text_file(log_path, os.str());
    std::cerr << "wrote " << out_path << " and " << log_path << '\n';
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& data_path,
                const std::string& missing_token, const std::string& out_path) {
    const Model model = load_model(model_path);
    const CsvTable table = read_csv_table(data_path);
    const FeatureBlock block =
        extract_features(table, model.feature_names, missing_token);
    const Matrix preds = predict(model, block.values, &block.missing);
    write_predictions_csv(out_path, preds, model.levels);
    std::cerr << "wrote " << out_path << '\n';
    return 0;
}

QuantileLevels levels_from_prediction_header(const std::vector<std::string>& header) {
    std::vector<double> levels;
    for (const std::string& name : header) {
        if (name.empty() || name[0] != 'q')
            throw std::runtime_error("prediction column '" + name +
                                     "' does not look like q<level>");
        levels.push_back(std::stod(name.substr(1)));
    }
    return QuantileLevels{levels};
}

int cmd_eval(const std::string& predictions_path, const std::string& data_path,
             const std::string& target, const std::string& missing_token,
             const std::string& levels_text, double lo, double hi,
             const std::string& out_path, const std::string& reliability_path,
             const std::string& csv_path) {
    const CsvTable pred_table = read_csv_table(predictions_path);
    const QuantileLevels levels = levels_from_prediction_header(pred_table.header);
    if (!levels_text.empty()) {
        const QuantileLevels expected = parse_levels(levels_text);
        if (!(expected == levels))
            throw std::runtime_error(
                "--levels does not match the prediction file header");
    }
    const FeatureBlock block =
        extract_features(pred_table, pred_table.header, missing_token);
    for (std::uint8_t m : block.missing)
        if (m) throw std::runtime_error("prediction file has missing cells");

    const CsvTable data_table = read_csv_table(data_path);
    auto it = std::find(data_table.header.begin(), data_table.header.end(), target);
    if (it == data_table.header.end())
        throw std::runtime_error(data_path + ": target column '" + target +
                                 "' not found");
    const FeatureBlock target_block =
        extract_features(data_table, {target}, missing_token);
    for (std::uint8_t m : target_block.missing)
        if (m) throw std::runtime_error(data_path + ": missing target value");
    const std::vector<double>& y = target_block.values.data();

    if (y.size() != block.values.rows())
        throw std::runtime_error("prediction and target row counts differ");

    const EvalReport report = evaluate(y, block.values, levels, lo, hi);
    write_text_file(out_path, report_to_json_string(report) + "\n");
    write_text_file(reliability_path, reliability_csv(report));
    if (!csv_path.empty())
        write_text_file(csv_path,
                        report_csv_header() + "\n" + report_csv_row(report) + "\n");
    std::cerr << "wrote " << out_path << " and " << reliability_path << '\n';
    return 0;
}

int cmd_tune(const std::string& data_path, const std::string& target,
             const std::string& missing_token, const BoosterFlags& flags,
             const std::string& grid_path, int kfold, const std::string& chrono,
             int threads, const std::string& out_path,
             const std::string& table_path, const std::string& refit_path) {
    const BoosterConfig base = flags.to_config();
    const Dataset ds = load_csv(data_path, target, missing_token);

    SplitPlan plan;
    if (!chrono.empty()) {
        const std::vector<double> fracs = parse_double_list(chrono);
        if (fracs.size() != 3)
            throw std::runtime_error("--chrono expects train,val,test fractions");
        plan = plan_chronological(ds, fracs[0], fracs[1], fracs[2]);
    } else {
        plan = plan_kfold(ds, kfold, base.seed);
    }

    Grid grid;
    if (!grid_path.empty()) grid = grid_from_json_file(grid_path);

    const TuneResult result = grid_search(
        ds, base, grid, plan, threads, [](std::size_t done, std::size_t total) {
            std::cerr << "tune: cell " << done << "/" << total << " done\n";
        });
    write_text_file(out_path, tune_result_json(result) + "\n");
    if (!table_path.empty()) write_text_file(table_path, tune_table_csv(result));
    if (!refit_path.empty()) {
        const Model model = refit_final(ds, result, plan);
        ensure_parent_dir(refit_path);
        save_model(model, refit_path);
        std::cerr << "wrote refit model " << refit_path << '\n';
    }
    std::cerr << "wrote " << out_path << '\n';
    return 0;
}

int cmd_crossing_demo(const std::string& levels_text, const std::string& loss,
                      double s, double delta, double lambda, double eta,
                      const std::string& gaps_text, const std::string& out_path) {
    LossSpec spec;
    spec.kind = loss_kind_from_string(loss);
    spec.s = s;
    spec.delta = delta;
    const QuantileLevels levels = parse_levels(levels_text);
    const std::vector<double> gaps = parse_double_list(gaps_text);
    const auto rows = crossing_scenarios(levels, spec, lambda, eta, gaps);

    std::ostringstream os;
    os << "scenario,label,gap,q_lo_before,q_hi_before,q_lo_after,q_hi_after,crossed\n";
    for (const CrossingScenarioRow& row : rows) {
        os << row.scenario << ',' << row.label << ',' << format_number(row.gap)
           << ',' << format_number(row.before[0]) << ','
           << format_number(row.before[1]) << ',' << format_number(row.after[0])
           << ',' << format_number(row.after[1]) << ','
           << (row.crossed ? 1 : 0) << '\n';
    }
    if (out_path.empty()) {
        std::cout << os.str();
    } else {
        write_text_file(out_path, os.str());
        std::cerr << "wrote " << out_path << '\n';
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Gradient-boosted composite quantile regression with smooth "
                 "pinball losses"};
    app.require_subcommand(1);

    // toy
    auto* toy = app.add_subcommand("toy", "generate the synthetic benchmark");
    ConfigBinder toy_binder(toy);
    std::size_t toy_n = 1000;
    std::uint64_t toy_seed = 1;
    std::string toy_levels = kDefaultLevels;
    std::string toy_out = "toy_out";
    toy->add_option("--n", toy_n, "rows per split");
    toy->add_option("--seed", toy_seed, "random seed");
    toy->add_option("--levels", toy_levels, "levels for the true-quantile grid");
    toy->add_option("--out", toy_out, "output directory");
    toy_binder.bind("n", toy_n);
    toy_binder.bind("seed", toy_seed);
    toy_binder.bind("levels", toy_levels);
    toy_binder.bind("out", toy_out);

    // train
    auto* train = app.add_subcommand("train", "fit a model on a CSV dataset");
    ConfigBinder train_binder(train);
    std::string train_data, train_target = "y", train_missing;
    BoosterFlags train_flags;
    int train_n_estimators = 400, train_max_depth = 3;
    double train_lambda = 1.0, train_gamma = 0.0;
    std::string train_out = "model.json", train_log = "training_log.csv";
    train->add_option("--data", train_data, "training CSV");
    train->add_option("--target", train_target, "target column name");
    train->add_option("--missing-token", train_missing,
                      "cell value marking a missing feature");
    train_flags.add_options(train, train_binder);
    train->add_option("--n-estimators", train_n_estimators, "number of trees");
    train->add_option("--lambda", train_lambda, "L2 penalty on leaf weights");
    train->add_option("--gamma", train_gamma, "per-leaf penalty");
    train->add_option("--max-depth", train_max_depth,
                      "maximum nodes on a root-to-leaf path");
    train->add_option("--out", train_out, "model file");
    train->add_option("--log-out", train_log, "training log CSV");
    train_binder.bind("data", train_data);
    train_binder.bind("target", train_target);
    train_binder.bind("missing-token", train_missing);
    train_binder.bind("n-estimators", train_n_estimators);
    train_binder.bind("lambda", train_lambda);
    train_binder.bind("gamma", train_gamma);
    train_binder.bind("max-depth", train_max_depth);
    train_binder.bind("out", train_out);
    train_binder.bind("log-out", train_log);

    // predict
    auto* predict_cmd = app.add_subcommand("predict", "predict quantiles for a CSV");
    ConfigBinder predict_binder(predict_cmd);
    std::string pred_model, pred_data, pred_missing, pred_out = "predictions.csv";
    predict_cmd->add_option("--model", pred_model, "model file");
    predict_cmd->add_option("--data", pred_data, "feature CSV");
    predict_cmd->add_option("--missing-token", pred_missing,
                            "cell value marking a missing feature");
    predict_cmd->add_option("--out", pred_out, "predictions CSV");
    predict_binder.bind("model", pred_model);
    predict_binder.bind("data", pred_data);
    predict_binder.bind("missing-token", pred_missing);
    predict_binder.bind("out", pred_out);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against targets");
    ConfigBinder eval_binder(eval_cmd);
    std::string eval_preds, eval_data, eval_target = "y", eval_missing;
    std::string eval_levels;
    double eval_lo = 0.05, eval_hi = 0.95;
    std::string eval_out = "eval.json", eval_rel = "reliability.csv", eval_csv;
    eval_cmd->add_option("--predictions", eval_preds, "predictions CSV");
    eval_cmd->add_option("--data", eval_data, "CSV holding the target column");
    eval_cmd->add_option("--target", eval_target, "target column name");
    eval_cmd->add_option("--missing-token", eval_missing, "missing marker");
    eval_cmd->add_option("--levels", eval_levels,
                         "expected levels; validated against the header");
    eval_cmd->add_option("--lo", eval_lo, "lower interval level");
    eval_cmd->add_option("--hi", eval_hi, "upper interval level");
    eval_cmd->add_option("--out", eval_out, "report JSON");
    eval_cmd->add_option("--reliability-out", eval_rel, "reliability CSV");
    eval_cmd->add_option("--csv-out", eval_csv, "flat one-row CSV report");
    eval_binder.bind("predictions", eval_preds);
    eval_binder.bind("data", eval_data);
    eval_binder.bind("target", eval_target);
    eval_binder.bind("missing-token", eval_missing);
    eval_binder.bind("levels", eval_levels);
    eval_binder.bind("lo", eval_lo);
    eval_binder.bind("hi", eval_hi);
    eval_binder.bind("out", eval_out);
    eval_binder.bind("reliability-out", eval_rel);
    eval_binder.bind("csv-out", eval_csv);

    // tune
    auto* tune_cmd = app.add_subcommand("tune", "grid-search hyper-parameters");
    ConfigBinder tune_binder(tune_cmd);
    std::string tune_data, tune_target = "y", tune_missing;
    BoosterFlags tune_flags;
    std::string tune_grid, tune_chrono;
    int tune_kfold = 3, tune_threads = 1;
    std::string tune_out = "tune.json", tune_table, tune_refit;
    tune_cmd->add_option("--data", tune_data, "training CSV");
    tune_cmd->add_option("--target", tune_target, "target column name");
    tune_cmd->add_option("--missing-token", tune_missing, "missing marker");
    tune_flags.add_options(tune_cmd, tune_binder);
    tune_cmd->add_option("--grid", tune_grid,
                         "JSON grid file (defaults to the standard grid)");
    tune_cmd->add_option("--kfold", tune_kfold, "number of folds");
    tune_cmd->add_option("--chrono", tune_chrono,
                         "train,val,test fractions for a time-ordered split");
    tune_cmd->add_option("--threads", tune_threads, "parallel fold fits");
    tune_cmd->add_option("--out", tune_out, "tune result JSON");
    tune_cmd->add_option("--table-out", tune_table, "per-cell CSV table");
    tune_cmd->add_option("--refit-out", tune_refit,
                         "also refit the winner and save the model here");
    tune_binder.bind("data", tune_data);
    tune_binder.bind("target", tune_target);
    tune_binder.bind("missing-token", tune_missing);
    tune_binder.bind("grid", tune_grid);
    tune_binder.bind("kfold", tune_kfold);
    tune_binder.bind("chrono", tune_chrono);
    tune_binder.bind("threads", tune_threads);
    tune_binder.bind("out", tune_out);
    tune_binder.bind("table-out", tune_table);
    tune_binder.bind("refit-out", tune_refit);

    // crossing-demo
    auto* demo = app.add_subcommand(
        "crossing-demo", "single-point update scenarios that can cross quantiles");
    ConfigBinder demo_binder(demo);
    std::string demo_levels = "0.85,0.95", demo_loss = "arctan";
    double demo_s = 0.1, demo_delta = 1.0, demo_lambda = 0.0, demo_eta = 1.0;
    std::string demo_gaps = "0.5,1,2", demo_out;
    demo->add_option("--levels", demo_levels, "exactly two levels");
    demo->add_option("--loss", demo_loss, "arctan, exponential or huber")
        ->check(CLI::IsMember({"arctan", "exponential", "huber"}));
    demo->add_option("--s", demo_s, "smoothing width");
    demo->add_option("--delta", demo_delta, "huber threshold");
    demo->add_option("--lambda", demo_lambda, "L2 penalty in the update");
    demo->add_option("--eta", demo_eta, "step size");
    demo->add_option("--gaps", demo_gaps, "gap sizes to scan");
    demo->add_option("--out", demo_out, "output CSV (stdout when omitted)");
    demo_binder.bind("levels", demo_levels);
    demo_binder.bind("loss", demo_loss);
    demo_binder.bind("s", demo_s);
    demo_binder.bind("delta", demo_delta);
    demo_binder.bind("lambda", demo_lambda);
    demo_binder.bind("eta", demo_eta);
    demo_binder.bind("gaps", demo_gaps);
    demo_binder.bind("out", demo_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*toy) {
            toy_binder.apply();
            return cmd_toy(toy_n, toy_seed, toy_levels, toy_out);
        }
        if (*train) {
            train_binder.apply();
            require_value(train_data, "--data");
            return cmd_train(train_data, train_target, train_missing, train_flags,
                             train_n_estimators, train_lambda, train_gamma,
                             train_max_depth, train_out, train_log);
        }
        if (*predict_cmd) {
            predict_binder.apply();
            require_value(pred_model, "--model");
            require_value(pred_data, "--data");
            return cmd_predict(pred_model, pred_data, pred_missing, pred_out);
        }
        if (*eval_cmd) {
            eval_binder.apply();
            require_value(eval_preds, "--predictions");
            require_value(eval_data, "--data");
            return cmd_eval(eval_preds, eval_data, eval_target, eval_missing,
                            eval_levels, eval_lo, eval_hi, eval_out, eval_rel,
                            eval_csv);
        }
        if (*tune_cmd) {
            tune_binder.apply();
            require_value(tune_data, "--data");
            return cmd_tune(tune_data, tune_target, tune_missing, tune_flags,
                            tune_grid, tune_kfold, tune_chrono, tune_threads,
                            tune_out, tune_table, tune_refit);
        }
        if (*demo) {
            demo_binder.apply();
            return cmd_crossing_demo(demo_levels, demo_loss, demo_s, demo_delta,
                                     demo_lambda, demo_eta, demo_gaps, demo_out);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::cerr << "error: no command selected\n";
    return 1;
}

}  // namespace qboost
