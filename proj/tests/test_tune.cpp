#include <doctest.h>

#include <string>
#include <vector>

#include "qboost/booster.hpp"
#include "qboost/dataset.hpp"
#include "qboost/metrics.hpp"
#include "qboost/tune.hpp"

using namespace qboost;

namespace {

BoosterConfig tiny_base() {
    BoosterConfig cfg;
    cfg.levels = QuantileLevels{{0.1, 0.5, 0.9}};
    cfg.n_estimators = 5;
    return cfg;
}

Grid one_cell_grid() {
    Grid grid;
    grid.n_estimators = {5};
    grid.lambda = {1.0};
    grid.gamma = {0.0};
    grid.max_depth = {2};
    return grid;
}

}  // namespace

TEST_CASE("default grid spans 504 cells") {
    CHECK(Grid{}.cell_count() == 504);
    Grid bad;
    bad.lambda.clear();
    CHECK_THROWS(bad.validate());
}

TEST_CASE("one-cell grids pass through") {
    const Dataset ds = make_toy(60, 3);
    const SplitPlan plan = plan_kfold(ds, 3, 7);
    std::size_t progress_total = 0, progress_calls = 0;
    const TuneResult result = grid_search(
        ds, tiny_base(), one_cell_grid(), plan, 1,
        [&](std::size_t done, std::size_t total) {
            ++progress_calls;
            progress_total = total;
            CHECK(done == progress_calls);
        });
    CHECK(result.total_cells == 1);
    CHECK(progress_calls == 1);
    CHECK(progress_total == 1);
    REQUIRE(result.table.size() == 1);
    CHECK(result.table[0].fold_scores.size() == 3);
    CHECK(result.best_index == 0);
    CHECK(result.best_config.n_estimators == 5);
    CHECK(result.best_config.tree.max_depth == 2);
}

TEST_CASE("grid search means equal manually run folds") {
    const Dataset ds = make_toy(60, 5);
    const SplitPlan plan = plan_kfold(ds, 3, 11);
    Grid grid = one_cell_grid();
    grid.n_estimators = {5, 10};

    const BoosterConfig base = tiny_base();
    const TuneResult result = grid_search(ds, base, grid, plan);
    REQUIRE(result.table.size() == 2);

    // Re-run each fold by hand for both cells.
    for (std::size_t c = 0; c < 2; ++c) {
        BoosterConfig cfg = base;
        cfg.n_estimators = grid.n_estimators[c];
        cfg.tree.lambda = 1.0;
        cfg.tree.gamma = 0.0;
        cfg.tree.max_depth = 2;
        double sum = 0.0;
        for (int f = 0; f < 3; ++f) {
            const auto train_rows = plan.rows_without(f);
            const auto val_rows = plan.rows_with(f);
            const Dataset train = standardize_targets(subset_rows(ds, train_rows));
            const Model model = fit(train, cfg).model;
            const Dataset val = subset_rows(ds, val_rows);
            const double score =
                average_pinball(val.targets, predict(model, val), cfg.levels);
            CHECK(result.table[c].fold_scores[f] == doctest::Approx(score));
            sum += score;
        }
        CHECK(result.table[c].mean == doctest::Approx(sum / 3.0));
    }
    const std::size_t expect_best =
        result.table[0].mean <= result.table[1].mean ? 0 : 1;
    CHECK(result.best_index == expect_best);
}

TEST_CASE("chronological plans train strictly before they validate") {
    const Dataset ds = make_toy(50, 9);
    const SplitPlan plan = plan_chronological(ds, 0.8, 0.1, 0.1);
    const auto train_rows = plan.rows_with(0);
    const auto val_rows = plan.rows_with(1);
    const auto test_rows = plan.rows_with(2);
    for (std::size_t t : train_rows)
        for (std::size_t v : val_rows) CHECK(t < v);
    for (std::size_t v : val_rows)
        for (std::size_t te : test_rows) CHECK(v < te);

    const TuneResult result =
        grid_search(ds, tiny_base(), one_cell_grid(), plan);
    CHECK(result.table[0].fold_scores.size() == 1);
    CHECK(result.protocol.find("chronological") != std::string::npos);
}

TEST_CASE("refit_final trains on train plus validation only") {
    const Dataset ds = make_toy(100, 13);
    const SplitPlan plan = plan_chronological(ds, 0.8, 0.1, 0.1);
    const TuneResult result =
        grid_search(ds, tiny_base(), one_cell_grid(), plan);
    const Model refit = refit_final(ds, result, plan);

    // 90 rows of targets produce this standardization; test rows (the last
    // ten) must not contribute.
    const auto rows = plan.rows_without(2);
    CHECK(rows.size() == 90);
    const Dataset expected = standardize_targets(subset_rows(ds, rows));
    REQUIRE(refit.standardization.has_value());
    CHECK(refit.standardization->mean ==
          doctest::Approx(expected.standardization->mean));
    CHECK(refit.standardization->std ==
          doctest::Approx(expected.standardization->std));

    SUBCASE("k-fold refits on every row") {
        const SplitPlan kplan = plan_kfold(ds, 3, 1);
        const TuneResult kresult =
            grid_search(ds, tiny_base(), one_cell_grid(), kplan);
        const Model krefit = refit_final(ds, kresult, kplan);
        const Dataset all = standardize_targets(ds);
        CHECK(krefit.standardization->mean ==
              doctest::Approx(all.standardization->mean));
    }
}

TEST_CASE("grid search is deterministic and thread count does not matter") {
    const Dataset ds = make_toy(40, 17);
    const SplitPlan plan = plan_kfold(ds, 2, 3);
    Grid grid = one_cell_grid();
    grid.lambda = {0.1, 1.0};
    grid.max_depth = {2, 3};

    const TuneResult a = grid_search(ds, tiny_base(), grid, plan, 1);
    const TuneResult b = grid_search(ds, tiny_base(), grid, plan, 1);
    const TuneResult c = grid_search(ds, tiny_base(), grid, plan, 4);
    CHECK(tune_result_json(a) == tune_result_json(b));
    CHECK(tune_result_json(a) == tune_result_json(c));
    CHECK(tune_table_csv(a) == tune_table_csv(c));
}

TEST_CASE("a failing cell aborts with its identity") {
    const Dataset ds = make_toy(30, 19);
    const SplitPlan plan = plan_kfold(ds, 2, 5);
    BoosterConfig base = tiny_base();
    base.loss.kind = LossKind::pinball;  // rejected by fit
    try {
        grid_search(ds, base, one_cell_grid(), plan);
        FAIL("expected an exception");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("grid cell") != std::string::npos);
        CHECK(msg.find("n_estimators=5") != std::string::npos);
    }
}

TEST_CASE("the full default grid runs and reports exactly 504 cells") {
    const Dataset ds = make_toy(36, 29);
    const SplitPlan plan = plan_kfold(ds, 3, 31);
    std::size_t calls = 0, last_done = 0, reported_total = 0;
    const TuneResult result = grid_search(
        ds, tiny_base(), Grid{}, plan, 4,
        [&](std::size_t done, std::size_t total) {
            ++calls;
            last_done = done;
            reported_total = total;
        });
    CHECK(result.total_cells == 504);
    CHECK(result.table.size() == 504);
    CHECK(calls == 504);
    CHECK(last_done == 504);
    CHECK(reported_total == 504);
    CHECK(result.best_index < 504);
}

TEST_CASE("tune result serializes to json and csv") {
    const Dataset ds = make_toy(40, 23);
    const SplitPlan plan = plan_kfold(ds, 2, 9);
    const TuneResult result =
        grid_search(ds, tiny_base(), one_cell_grid(), plan);
    const std::string json_text = tune_result_json(result);
    CHECK(json_text.find("\"total_cells\": 1") != std::string::npos);
    CHECK(json_text.find("\"best\"") != std::string::npos);
    const std::string csv = tune_table_csv(result);
    CHECK(csv.find("n_estimators,lambda,gamma,max_depth,mean_avg_pinball,fold0,fold1") == 0);
}
