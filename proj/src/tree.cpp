#include "qboost/tree.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qboost {

namespace {

struct OutputSums {
    std::vector<double> grad;
    std::vector<double> hess;

    explicit OutputSums(std::size_t n_outputs)
        : grad(n_outputs, 0.0), hess(n_outputs, 0.0) {}

    void add_row(const Matrix& g, const Matrix& h, std::size_t row) {
        for (std::size_t j = 0; j < grad.size(); ++j) {
            grad[j] += g.at(row, j);
            hess[j] += h.at(row, j);
        }
    }
};

double hess_total(std::span<const double> hess) {
    double sum = 0.0;
    for (double h : hess) sum += h;
    // Prefix/suffix subtraction can leave a tiny negative residue.
    return std::max(sum, 0.0);
}

bool denominators_positive(std::span<const double> hess, double lambda) {
    for (double h : hess)
        if (!(std::max(h, 0.0) + lambda > 0.0)) return false;
    return true;
}

}  // namespace

void TreeParams::validate() const {
    if (max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
    if (!(min_child_weight >= 0.0))
        throw std::invalid_argument("min_child_weight must be >= 0");
    if (!(max_delta_step > 0.0))
        throw std::invalid_argument("max_delta_step must be positive");
}

std::vector<double> leaf_weight(std::span<const double> grad_sum,
                                std::span<const double> hess_sum,
                                double lambda, double max_delta_step) {
    if (grad_sum.size() != hess_sum.size())
        throw std::invalid_argument("leaf_weight: mismatched sum lengths");
    std::vector<double> weights(grad_sum.size());
    for (std::size_t j = 0; j < grad_sum.size(); ++j) {
        if (!(hess_sum[j] >= 0.0))
            throw std::invalid_argument("leaf_weight: negative hessian sum");
        const double denom = hess_sum[j] + lambda;
        if (!(denom > 0.0))
            throw std::invalid_argument(
                "leaf_weight: hessian sum plus lambda must be positive");
        double w = -grad_sum[j] / denom;
        w = std::clamp(w, -max_delta_step, max_delta_step);
        weights[j] = w;
    }
    return weights;
}

double split_gain(std::span<const double> grad_left,
                  std::span<const double> hess_left,
                  std::span<const double> grad_right,
                  std::span<const double> hess_right,
                  const TreeParams& params) {
    const std::size_t n = grad_left.size();
    if (hess_left.size() != n || grad_right.size() != n || hess_right.size() != n)
        throw std::invalid_argument("split_gain: mismatched sum lengths");
    double gain = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double hl = hess_left[j] + params.lambda;
        const double hr = hess_right[j] + params.lambda;
        const double hp = hess_left[j] + hess_right[j] + params.lambda;
        if (!(hl > 0.0 && hr > 0.0 && hp > 0.0))
            throw std::invalid_argument("split_gain: non-positive denominator");
        const double gp = grad_left[j] + grad_right[j];
        gain += grad_left[j] * grad_left[j] / hl +
                grad_right[j] * grad_right[j] / hr - gp * gp / hp;
    }
    return 0.5 * gain - params.gamma;
}

std::optional<SplitCandidate> find_best_split(
    std::span<const std::size_t> rows, const Matrix& features,
    const std::vector<std::uint8_t>* missing, const Matrix& grad,
    const Matrix& hess, const TreeParams& params) {
    params.validate();
    if (rows.size() < 2)
        throw std::invalid_argument("find_best_split needs at least 2 rows");
    const std::size_t n_outputs = grad.cols();
    const std::size_t n_features = features.cols();

    OutputSums total(n_outputs);
    for (std::size_t r : rows) total.add_row(grad, hess, r);

    auto is_missing = [&](std::size_t r, std::size_t f) {
        return missing != nullptr && (*missing)[r * n_features + f] != 0;
    };

    std::optional<SplitCandidate> best;
    std::vector<std::pair<double, std::size_t>> present;
    std::vector<double> grad_left(n_outputs), hess_left(n_outputs);
    std::vector<double> grad_right(n_outputs), hess_right(n_outputs);

    for (std::size_t f = 0; f < n_features; ++f) {
        present.clear();
        OutputSums miss(n_outputs);
        bool any_missing = false;
        for (std::size_t r : rows) {
            if (is_missing(r, f)) {
                miss.add_row(grad, hess, r);
                any_missing = true;
            } else {
                present.emplace_back(features.at(r, f), r);
            }
        }
        if (present.size() < 2) continue;
        std::stable_sort(present.begin(), present.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });

        OutputSums prefix(n_outputs);
        for (std::size_t p = 0; p + 1 < present.size(); ++p) {
            prefix.add_row(grad, hess, present[p].second);
            const double lo = present[p].first;
            const double hi = present[p + 1].first;
            if (!(lo < hi)) continue;
            double thr = lo + (hi - lo) / 2.0;
            if (!(thr > lo)) thr = hi;  // adjacent representable values

            // Try both default directions; the first evaluated (missing
            // left) wins ties, as does the lowest feature and threshold,
            // because later candidates must be strictly better.
            for (int dir = 0; dir < (any_missing ? 2 : 1); ++dir) {
                const bool missing_left = dir == 0;
                for (std::size_t j = 0; j < n_outputs; ++j) {
                    grad_left[j] = prefix.grad[j];
                    hess_left[j] = prefix.hess[j];
                    if (missing_left) {
                        grad_left[j] += miss.grad[j];
                        hess_left[j] += miss.hess[j];
                    }
                    grad_right[j] = total.grad[j] - grad_left[j];
                    hess_right[j] = std::max(total.hess[j] - hess_left[j], 0.0);
                    hess_left[j] = std::max(hess_left[j], 0.0);
                }
                if (hess_total(hess_left) < params.min_child_weight) continue;
                if (hess_total(hess_right) < params.min_child_weight) continue;
                if (!denominators_positive(hess_left, params.lambda)) continue;
                if (!denominators_positive(hess_right, params.lambda)) continue;
                const double gain =
                    split_gain(grad_left, hess_left, grad_right, hess_right, params);
                if (!best || gain > best->gain)
                    best = SplitCandidate{static_cast<int>(f), thr, missing_left, gain};
            }
        }
    }
    if (best && best->gain > 0.0) return best;
    return std::nullopt;
}

namespace {

struct TreeBuilder {
    const Matrix& features;
    const std::vector<std::uint8_t>* missing;
    const Matrix& grad;
    const Matrix& hess;
    const TreeParams& params;
    std::vector<TreeNode> nodes{};
    int leaf_count = 0;
    int max_seen_depth = 0;

    bool row_missing(std::size_t r, std::size_t f) const {
        return missing != nullptr && (*missing)[r * features.cols() + f] != 0;
    }

    int build(std::span<const std::size_t> rows, int depth) {
        max_seen_depth = std::max(max_seen_depth, depth);
        std::optional<SplitCandidate> split;
        if (depth < params.max_depth && rows.size() >= 2)
            split = find_best_split(rows, features, missing, grad, hess, params);

        if (!split) {
            OutputSums sums(static_cast<std::size_t>(grad.cols()));
            for (std::size_t r : rows) sums.add_row(grad, hess, r);
            TreeNode leaf;
            leaf.is_leaf = true;
            leaf.weights = leaf_weight(sums.grad, sums.hess, params.lambda,
                                       params.max_delta_step);
            nodes.push_back(std::move(leaf));
            ++leaf_count;
            return static_cast<int>(nodes.size() - 1);
        }

        std::vector<std::size_t> left_rows, right_rows;
        const auto f = static_cast<std::size_t>(split->feature);
        for (std::size_t r : rows) {
            bool go_left;
            if (row_missing(r, f)) {
                go_left = split->default_left;
            } else {
                go_left = features.at(r, f) < split->threshold;
            }
            (go_left ? left_rows : right_rows).push_back(r);
        }

        const int idx = static_cast<int>(nodes.size());
        TreeNode node;
        node.is_leaf = false;
        node.feature = split->feature;
        node.threshold = split->threshold;
        node.default_left = split->default_left;
        nodes.push_back(std::move(node));
        const int left = build(left_rows, depth + 1);
        const int right = build(right_rows, depth + 1);
        nodes[idx].left = left;
        nodes[idx].right = right;
        return idx;
    }
};

}  // namespace

Tree build_tree(std::span<const std::size_t> rows, const Matrix& features,
                const std::vector<std::uint8_t>* missing, const Matrix& grad,
                const Matrix& hess, const TreeParams& params) {
    params.validate();
    if (rows.empty()) throw std::invalid_argument("build_tree: no rows");
    if (grad.rows() != hess.rows() || grad.cols() != hess.cols())
        throw std::invalid_argument("build_tree: grad/hess shape mismatch");
    TreeBuilder builder{features, missing, grad, hess, params, {}, 0, 0};
    builder.build(rows, 1);
    Tree tree;
    tree.nodes = std::move(builder.nodes);
    tree.leaf_count = builder.leaf_count;
    tree.depth = builder.max_seen_depth;
    return tree;
}

std::size_t tree_leaf_index(const Tree& tree, std::span<const double> x,
                            std::span<const std::uint8_t> missing) {
    std::size_t idx = 0;
    while (!tree.nodes[idx].is_leaf) {
        const TreeNode& node = tree.nodes[idx];
        const auto f = static_cast<std::size_t>(node.feature);
        if (f >= x.size())
            throw std::out_of_range("tree references feature " +
                                    std::to_string(node.feature) +
                                    " but the row has only " +
                                    std::to_string(x.size()) + " entries");
        const bool is_missing = f < missing.size() && missing[f] != 0;
        bool go_left;
        if (is_missing) {
            go_left = node.default_left;
        } else {
            go_left = x[f] < node.threshold;
        }
        idx = static_cast<std::size_t>(go_left ? node.left : node.right);
    }
    return idx;
}

const std::vector<double>& tree_predict(const Tree& tree,
                                        std::span<const double> x,
                                        std::span<const std::uint8_t> missing) {
    return tree.nodes[tree_leaf_index(tree, x, missing)].weights;
}

}  // namespace qboost
