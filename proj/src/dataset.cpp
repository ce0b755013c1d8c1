#include "qboost/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qboost/random.hpp"

namespace qboost {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double parse_cell(const std::string& cell, std::size_t row,
                  const std::string& column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw std::runtime_error("row " + std::to_string(row) + ", column '" +
                                 column + "': cannot parse '" + cell +
                                 "' as a number");
    return v;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace

std::vector<std::size_t> SplitPlan::rows_with(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] == label) out.push_back(i);
    return out;
}

std::vector<std::size_t> SplitPlan::rows_without(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        if (assignments[i] != label) out.push_back(i);
    return out;
}

std::string SplitPlan::describe() const {
    if (kind == Kind::kfold)
        return std::to_string(k) + "-fold cross-validation (seed " +
               std::to_string(seed) + ")";
    std::ostringstream os;
    os << "chronological split " << fractions[0] << "/" << fractions[1] << "/"
       << fractions[2];
    return os.str();
}

CsvTable read_csv_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (first && line.empty())
            throw std::runtime_error(path + ": empty header row");
        if (first) {
            table.header = split_line(line);
            first = false;
            continue;
        }
        if (line.empty()) continue;
        auto cells = split_line(line);
        if (cells.size() != table.header.size())
            throw std::runtime_error(path + ": row " +
                                     std::to_string(table.rows.size() + 1) +
                                     " has " + std::to_string(cells.size()) +
                                     " cells, expected " +
                                     std::to_string(table.header.size()));
        table.rows.push_back(std::move(cells));
    }
    if (first) throw std::runtime_error(path + ": file is empty");
    std::set<std::string> seen;
    for (const auto& name : table.header)
        if (!seen.insert(name).second)
            throw std::runtime_error(path + ": duplicate column name '" + name + "'");
    return table;
}

FeatureBlock extract_features(const CsvTable& table,
                              const std::vector<std::string>& names,
                              const std::string& missing_token) {
    std::vector<std::size_t> cols;
    for (const auto& name : names) {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end())
            throw std::runtime_error("column '" + name + "' not found");
        cols.push_back(static_cast<std::size_t>(it - table.header.begin()));
    }
    FeatureBlock block{Matrix(table.rows.size(), names.size()),
                       std::vector<std::uint8_t>(table.rows.size() * names.size(), 0)};
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const std::string& cell = table.rows[i][cols[j]];
            if (cell == missing_token) {
                block.values.at(i, j) = kNaN;
                block.missing[i * names.size() + j] = 1;
            } else {
                block.values.at(i, j) = parse_cell(cell, i + 1, names[j]);
            }
        }
    }
    return block;
}

Dataset load_csv(const std::string& path, const std::string& target_column,
                 const std::string& missing_token) {
    CsvTable table = read_csv_table(path);
    auto target_it =
        std::find(table.header.begin(), table.header.end(), target_column);
    if (target_it == table.header.end())
        throw std::runtime_error(path + ": target column '" + target_column +
                                 "' not found");
    const std::size_t target_col =
        static_cast<std::size_t>(target_it - table.header.begin());
    if (table.header.size() < 2)
        throw std::runtime_error(path + ": need at least one feature column");
    if (table.rows.empty())
        throw std::runtime_error(path + ": no data rows");

    Dataset ds;
    ds.target_name = target_column;
    for (std::size_t j = 0; j < table.header.size(); ++j)
        if (j != target_col) ds.feature_names.push_back(table.header[j]);

    ds.targets.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const std::string& cell = table.rows[i][target_col];
        if (cell == missing_token)
            throw std::runtime_error(path + ": row " + std::to_string(i + 1) +
                                     ": missing target value");
        ds.targets.push_back(parse_cell(cell, i + 1, target_column));
    }
    FeatureBlock block = extract_features(table, ds.feature_names, missing_token);
    ds.features = std::move(block.values);
    ds.missing = std::move(block.missing);
    return ds;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("number formatting failed");
    return std::string(buf, ptr);
}

void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (std::size_t j = 0; j < ds.feature_names.size(); ++j)
        out << ds.feature_names[j] << ',';
    out << ds.target_name << '\n';
    for (std::size_t i = 0; i < ds.n_rows(); ++i) {
        for (std::size_t j = 0; j < ds.n_features(); ++j) {
            if (!ds.is_missing(i, j)) out << format_number(ds.features.at(i, j));
            out << ',';
        }
        out << format_number(ds.targets[i]) << '\n';
    }
    if (!out) throw std::runtime_error("failed writing " + path);
}

Dataset standardize_targets(const Dataset& ds) {
    const std::size_t n = ds.targets.size();
    if (n == 0) throw std::invalid_argument("cannot standardize empty targets");
    double mean = 0.0;
    for (double y : ds.targets) mean += y;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double y : ds.targets) var += (y - mean) * (y - mean);
    var /= static_cast<double>(n);
    const double std_dev = std::sqrt(var);
    if (!(std_dev > 0.0))
        throw std::invalid_argument("targets have zero variance; cannot standardize");
    Dataset out = ds;
    for (double& y : out.targets) y = (y - mean) / std_dev;
    out.standardization = Standardization{mean, std_dev};
    return out;
}

Matrix destandardize_predictions(const Matrix& preds, const Standardization& st) {
    Matrix out = preds;
    for (double& v : out.data()) v = v * st.std + st.mean;
    return out;
}

double empirical_quantile(std::vector<double> values, double tau) {
    if (values.empty())
        throw std::invalid_argument("empirical_quantile: empty sample");
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("empirical_quantile: tau must be in (0, 1)");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * tau;
    const std::size_t lo = static_cast<std::size_t>(h);
    const double w = h - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] * (1.0 - w) + values[lo + 1] * w;
}

Dataset make_toy(std::size_t n, std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("make_toy: n must be at least 1");
    Dataset ds;
    ds.features = Matrix(n, 1);
    ds.missing.assign(n, 0);
    ds.targets.resize(n);
    ds.feature_names = {"x"};
    ds.target_name = "y";
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.uniform();
        const double noise = 0.2 * rng.normal();
        ds.features.at(i, 0) = x;
        ds.targets[i] = std::sin(7.0 * x) + noise;
    }
    return ds;
}

double true_toy_quantile(double x, double tau) {
    return std::sin(7.0 * x) + 0.2 * norm_quantile(tau);
}

SplitPlan plan_kfold(const Dataset& ds, int k, std::uint64_t seed) {
    const std::size_t n = ds.n_rows();
    if (k < 2) throw std::invalid_argument("k-fold plan needs k >= 2");
    if (static_cast<std::size_t>(k) > n)
        throw std::invalid_argument("k-fold plan needs at least k rows");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // Fisher-Yates with our own bounded draw; std::shuffle is not
    // reproducible across standard libraries.
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(i + 1)]);
    SplitPlan plan;
    plan.kind = SplitPlan::Kind::kfold;
    plan.k = k;
    plan.seed = seed;
    plan.assignments.assign(n, 0);
    for (std::size_t pos = 0; pos < n; ++pos)
        plan.assignments[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(k));
    return plan;
}

SplitPlan plan_chronological(const Dataset& ds, double train_frac,
                             double val_frac, double test_frac) {
    if (!(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0))
        throw std::invalid_argument("chronological fractions must be positive");
    if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("chronological fractions must sum to 1");
    const std::size_t n = ds.n_rows();
    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(train_frac * static_cast<double>(n)));
    const std::size_t n_val = static_cast<std::size_t>(
        std::floor(val_frac * static_cast<double>(n)));
    if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
        throw std::invalid_argument("too few rows for the requested chronological plan");
    SplitPlan plan;
    plan.kind = SplitPlan::Kind::chronological;
    plan.fractions = {train_frac, val_frac, test_frac};
    plan.assignments.assign(n, 2);
    for (std::size_t i = 0; i < n_train; ++i) plan.assignments[i] = 0;
    for (std::size_t i = n_train; i < n_train + n_val; ++i) plan.assignments[i] = 1;
    return plan;
}

Dataset subset_rows(const Dataset& ds, std::span<const std::size_t> rows) {
    Dataset out;
    out.feature_names = ds.feature_names;
    out.target_name = ds.target_name;
    // The parent's standardization no longer certifies the subset's
    // moments; callers re-standardize when they need it.
    out.features = Matrix(rows.size(), ds.n_features());
    out.missing.assign(rows.size() * ds.n_features(), 0);
    out.targets.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        if (r >= ds.n_rows()) throw std::out_of_range("subset_rows: row out of range");
        for (std::size_t j = 0; j < ds.n_features(); ++j) {
            out.features.at(i, j) = ds.features.at(r, j);
            out.missing[i * ds.n_features() + j] = ds.missing[r * ds.n_features() + j];
        }
        out.targets[i] = ds.targets[r];
    }
    return out;
}

}  // namespace qboost
