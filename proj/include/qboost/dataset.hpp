#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qboost/matrix.hpp"

namespace qboost {

// Target standardization state: stored targets are (y - mean) / std.
struct Standardization {
    double mean = 0.0;
    double std = 1.0;
};

// Tabular dataset. Features may have missing cells (mask value 1, the cell
// itself holds NaN); targets never do.
struct Dataset {
    Matrix features;                       // N x D
    std::vector<std::uint8_t> missing;     // N x D, 1 = missing
    std::vector<double> targets;           // length N
    std::vector<std::string> feature_names;
    std::string target_name = "target";
    std::optional<Standardization> standardization;

    std::size_t n_rows() const { return features.rows(); }
    std::size_t n_features() const { return features.cols(); }
    bool is_missing(std::size_t r, std::size_t c) const {
        return missing[r * features.cols() + c] != 0;
    }
};

// Row partition for model selection. kfold assigns a fold id per row;
// chronological assigns 0 = train, 1 = validation, 2 = test, preserving
// row order.
struct SplitPlan {
    enum class Kind { kfold, chronological };
    Kind kind = Kind::kfold;
    int k = 0;
    std::uint64_t seed = 0;
    std::array<double, 3> fractions{0.0, 0.0, 0.0};
    std::vector<int> assignments;

    std::vector<std::size_t> rows_with(int label) const;
    std::vector<std::size_t> rows_without(int label) const;
    std::string describe() const;
};

// Raw CSV contents: comma-separated UTF-8, first row is the header,
// no quoting. Cells are kept verbatim.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv_table(const std::string& path);

struct FeatureBlock {
    Matrix values;
    std::vector<std::uint8_t> missing;
};

// Pull the named columns out of a table, flagging cells equal to
// missing_token as missing and parsing the rest as numbers.
FeatureBlock extract_features(const CsvTable& table,
                              const std::vector<std::string>& names,
                              const std::string& missing_token = "");

Dataset load_csv(const std::string& path, const std::string& target_column,
                 const std::string& missing_token = "");
void write_csv(const Dataset& ds, const std::string& path);

// Shortest decimal form that parses back to the identical double.
std::string format_number(double v);

// Replaces targets by (y - mean)/std using the population (divide by N)
// standard deviation and records the pair for the inverse transform.
Dataset standardize_targets(const Dataset& ds);

// Elementwise pred*std + mean. Affine and increasing, so quantile order
// and crossing counts are preserved.
Matrix destandardize_predictions(const Matrix& preds, const Standardization& st);

// Type-7 empirical quantile (linear interpolation at h = (n-1)*tau).
double empirical_quantile(std::vector<double> values, double tau);

// Synthetic benchmark: X ~ U[0,1], Y | X = x ~ Normal(sin(7x), 0.2^2).
// Per row the generator draws x first, then the noise quantile, from a
// single mt19937_64 stream, so a fixed seed reproduces the file anywhere.
Dataset make_toy(std::size_t n, std::uint64_t seed);

// Exact conditional quantile of the toy model: sin(7x) + 0.2 * z_tau.
double true_toy_quantile(double x, double tau);

SplitPlan plan_kfold(const Dataset& ds, int k, std::uint64_t seed);
SplitPlan plan_chronological(const Dataset& ds, double train_frac,
                             double val_frac, double test_frac);

Dataset subset_rows(const Dataset& ds, std::span<const std::size_t> rows);

}  // namespace qboost
