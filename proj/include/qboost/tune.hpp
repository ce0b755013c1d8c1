#pragma once

#include <functional>
#include <string>
#include <vector>

#include "qboost/booster.hpp"
#include "qboost/dataset.hpp"

namespace qboost {

// Cartesian hyper-parameter grid. The defaults are the standard search
// space: 3 * 8 * 7 * 3 = 504 cells.
struct Grid {
    std::vector<int> n_estimators = {100, 200, 400};
    std::vector<double> lambda = {0.01, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0};
    std::vector<double> gamma = {0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0};
    std::vector<int> max_depth = {2, 3, 4};

    std::size_t cell_count() const;
    void validate() const;
};

struct GridCell {
    int n_estimators = 0;
    double lambda = 0.0;
    double gamma = 0.0;
    int max_depth = 0;
};

struct CellScore {
    GridCell cell;
    std::vector<double> fold_scores;  // validation average pinball per fold
    double mean = 0.0;
};

struct TuneResult {
    BoosterConfig best_config;
    std::size_t best_index = 0;
    std::vector<CellScore> table;
    std::string protocol;
    std::size_t total_cells = 0;
};

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

// For every grid cell: train on each training partition (targets
// standardized inside the fold), score the held-out partition by average
// pinball loss in original units, and average across folds. Cells are
// enumerated n_estimators -> lambda -> gamma -> max_depth; the first cell
// achieving the minimal mean wins ties. Fold fits may run on several
// threads; the result table is identical to the sequential one.
TuneResult grid_search(const Dataset& ds, const BoosterConfig& base,
                       const Grid& grid, const SplitPlan& plan,
                       int threads = 1, const ProgressFn& progress = {});

// Train the winning configuration on the combined training and validation
// partitions of a chronological plan (test rows untouched); for k-fold
// plans the refit uses every row.
Model refit_final(const Dataset& ds, const TuneResult& result,
                  const SplitPlan& plan);

std::string tune_result_json(const TuneResult& result);
std::string tune_table_csv(const TuneResult& result);
Grid grid_from_json_file(const std::string& path);

}  // namespace qboost
