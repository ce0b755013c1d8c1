#include "qboost/tune.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "qboost/metrics.hpp"

namespace qboost {

std::size_t Grid::cell_count() const {
    return n_estimators.size() * lambda.size() * gamma.size() * max_depth.size();
}

void Grid::validate() const {
    if (n_estimators.empty() || lambda.empty() || gamma.empty() || max_depth.empty())
        throw std::invalid_argument("grid axes must be non-empty");
    for (int v : n_estimators)
        if (v < 1) throw std::invalid_argument("grid n_estimators must be >= 1");
    for (double v : lambda)
        if (!(v >= 0.0)) throw std::invalid_argument("grid lambda must be >= 0");
    for (double v : gamma)
        if (!(v >= 0.0)) throw std::invalid_argument("grid gamma must be >= 0");
    for (int v : max_depth)
        if (v < 1) throw std::invalid_argument("grid max_depth must be >= 1");
}

namespace {

std::vector<GridCell> enumerate_cells(const Grid& grid) {
    std::vector<GridCell> cells;
    cells.reserve(grid.cell_count());
    for (int ne : grid.n_estimators)
        for (double la : grid.lambda)
            for (double ga : grid.gamma)
                for (int md : grid.max_depth)
                    cells.push_back({ne, la, ga, md});
    return cells;
}

BoosterConfig apply_cell(const BoosterConfig& base, const GridCell& cell) {
    BoosterConfig cfg = base;
    cfg.n_estimators = cell.n_estimators;
    cfg.tree.lambda = cell.lambda;
    cfg.tree.gamma = cell.gamma;
    cfg.tree.max_depth = cell.max_depth;
    return cfg;
}

struct Fold {
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
};

std::vector<Fold> folds_from_plan(const Dataset& ds, const SplitPlan& plan) {
    if (plan.assignments.size() != ds.n_rows())
        throw std::invalid_argument("split plan does not match the dataset");
    std::vector<Fold> folds;
    if (plan.kind == SplitPlan::Kind::kfold) {
        for (int f = 0; f < plan.k; ++f)
            folds.push_back({plan.rows_without(f), plan.rows_with(f)});
    } else {
        folds.push_back({plan.rows_with(0), plan.rows_with(1)});
    }
    for (const Fold& fold : folds)
        if (fold.train_rows.empty() || fold.val_rows.empty())
            throw std::invalid_argument("split plan produced an empty partition");
    return folds;
}

std::string cell_id(const GridCell& cell) {
    std::ostringstream os;
    os << "n_estimators=" << cell.n_estimators << " lambda=" << cell.lambda
       << " gamma=" << cell.gamma << " max_depth=" << cell.max_depth;
    return os.str();
}

double run_fold(const Dataset& ds, const BoosterConfig& cfg, const Fold& fold) {
    Dataset train = standardize_targets(subset_rows(ds, fold.train_rows));
    const Model model = fit(train, cfg).model;
    Dataset val = subset_rows(ds, fold.val_rows);
    const Matrix preds = predict(model, val);
    return average_pinball(val.targets, preds, cfg.levels);
}

}  // namespace

TuneResult grid_search(const Dataset& ds, const BoosterConfig& base,
                       const Grid& grid, const SplitPlan& plan, int threads,
                       const ProgressFn& progress) {
    grid.validate();
    const std::vector<GridCell> cells = enumerate_cells(grid);
    const std::vector<Fold> folds = folds_from_plan(ds, plan);
    const std::size_t n_folds = folds.size();
    const std::size_t n_tasks = cells.size() * n_folds;

    std::vector<double> scores(n_tasks, 0.0);
    std::vector<std::exception_ptr> errors(n_tasks);

    std::mutex progress_mutex;
    std::vector<std::size_t> folds_done(cells.size(), 0);
    std::size_t cells_done = 0;

    auto run_task = [&](std::size_t task) {
        const std::size_t cell_idx = task / n_folds;
        const std::size_t fold_idx = task % n_folds;
        try {
            scores[task] = run_fold(ds, apply_cell(base, cells[cell_idx]),
                                    folds[fold_idx]);
        } catch (...) {
            errors[task] = std::current_exception();
        }
        if (progress) {
            std::lock_guard<std::mutex> lock(progress_mutex);
            if (++folds_done[cell_idx] == n_folds)
                progress(++cells_done, cells.size());
        }
    };

    if (threads <= 1) {
        for (std::size_t task = 0; task < n_tasks; ++task) run_task(task);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const std::size_t n_workers =
            std::min<std::size_t>(static_cast<std::size_t>(threads), n_tasks);
        for (std::size_t w = 0; w < n_workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t task = next.fetch_add(1); task < n_tasks;
                     task = next.fetch_add(1))
                    run_task(task);
            });
        }
        for (std::thread& t : pool) t.join();
    }

    for (std::size_t task = 0; task < n_tasks; ++task) {
        if (!errors[task]) continue;
        try {
            std::rethrow_exception(errors[task]);
        } catch (const std::exception& e) {
            throw std::runtime_error("grid cell [" + cell_id(cells[task / n_folds]) +
                                     "], fold " + std::to_string(task % n_folds) +
                                     ": " + e.what());
        }
    }

    TuneResult result;
    result.total_cells = cells.size();
    result.protocol = plan.describe();
    result.table.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        CellScore score;
        score.cell = cells[c];
        double sum = 0.0;
        for (std::size_t f = 0; f < n_folds; ++f) {
            score.fold_scores.push_back(scores[c * n_folds + f]);
            sum += scores[c * n_folds + f];
        }
        score.mean = sum / static_cast<double>(n_folds);
        result.table.push_back(std::move(score));
    }
    result.best_index = 0;
    for (std::size_t c = 1; c < result.table.size(); ++c)
        if (result.table[c].mean < result.table[result.best_index].mean)
            result.best_index = c;
    result.best_config = apply_cell(base, result.table[result.best_index].cell);
    return result;
}

Model refit_final(const Dataset& ds, const TuneResult& result,
                  const SplitPlan& plan) {
    std::vector<std::size_t> rows;
    if (plan.kind == SplitPlan::Kind::chronological) {
        rows = plan.rows_without(2);  // train + validation
    } else {
        rows.resize(ds.n_rows());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    }
    Dataset train = standardize_targets(subset_rows(ds, rows));
    return fit(train, result.best_config).model;
}

std::string tune_result_json(const TuneResult& result) {
    nlohmann::json j;
    j["protocol"] = result.protocol;
    j["total_cells"] = result.total_cells;
    j["best_index"] = result.best_index;
    const CellScore& best = result.table[result.best_index];
    j["best"] = {{"n_estimators", best.cell.n_estimators},
                 {"lambda", best.cell.lambda},
                 {"gamma", best.cell.gamma},
                 {"max_depth", best.cell.max_depth},
                 {"mean_avg_pinball", best.mean}};
    nlohmann::json table = nlohmann::json::array();
    for (const CellScore& score : result.table) {
        table.push_back({{"n_estimators", score.cell.n_estimators},
                         {"lambda", score.cell.lambda},
                         {"gamma", score.cell.gamma},
                         {"max_depth", score.cell.max_depth},
                         {"fold_scores", score.fold_scores},
                         {"mean_avg_pinball", score.mean}});
    }
    j["table"] = std::move(table);
    return j.dump(2);
}

std::string tune_table_csv(const TuneResult& result) {
    std::ostringstream os;
    os << "n_estimators,lambda,gamma,max_depth,mean_avg_pinball";
    const std::size_t n_folds =
        result.table.empty() ? 0 : result.table.front().fold_scores.size();
    for (std::size_t f = 0; f < n_folds; ++f) os << ",fold" << f;
    os << '\n';
    for (const CellScore& score : result.table) {
        os << score.cell.n_estimators << ',' << format_number(score.cell.lambda)
           << ',' << format_number(score.cell.gamma) << ',' << score.cell.max_depth
           << ',' << format_number(score.mean);
        for (double s : score.fold_scores) os << ',' << format_number(s);
        os << '\n';
    }
    return os.str();
}

Grid grid_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed grid file " + path + ": " + e.what());
    }
    Grid grid;
    if (j.contains("n_estimators"))
        grid.n_estimators = j.at("n_estimators").get<std::vector<int>>();
    if (j.contains("lambda"))
        grid.lambda = j.at("lambda").get<std::vector<double>>();
    if (j.contains("gamma"))
        grid.gamma = j.at("gamma").get<std::vector<double>>();
    if (j.contains("max_depth"))
        grid.max_depth = j.at("max_depth").get<std::vector<int>>();
    grid.validate();
    return grid;
}

}  // namespace qboost
