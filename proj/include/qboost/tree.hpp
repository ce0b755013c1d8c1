#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "qboost/matrix.hpp"

namespace qboost {

// Regularization and growth limits for a single tree. max_depth counts
// nodes along a root-to-leaf path, so max_depth = 1 means the tree is a
// single leaf. min_child_weight bounds the Hessian sum of each child,
// aggregated across all outputs; max_delta_step caps each leaf weight.
struct TreeParams {
    int max_depth = 3;
    double lambda = 1.0;
    double gamma = 0.0;
    double min_child_weight = 0.0;
    double max_delta_step = std::numeric_limits<double>::infinity();

    void validate() const;
};

struct TreeNode {
    bool is_leaf = true;
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    int left = -1;
    int right = -1;
    std::vector<double> weights;  // leaves only, one entry per output
};

// A regression tree with multi-output leaves. nodes[0] is the root.
struct Tree {
    std::vector<TreeNode> nodes;
    int leaf_count = 0;
    int depth = 0;
};

// Newton leaf weight -G_j / (H_j + lambda) per output, clamped to
// [-max_delta_step, max_delta_step].
std::vector<double> leaf_weight(std::span<const double> grad_sum,
                                std::span<const double> hess_sum,
                                double lambda, double max_delta_step);

// Gain of splitting a node with child sums (G_L, H_L), (G_R, H_R):
//   1/2 * sum_j [G_Lj^2/(H_Lj+lambda) + G_Rj^2/(H_Rj+lambda)
//                - (G_Lj+G_Rj)^2/(H_Lj+H_Rj+lambda)] - gamma.
double split_gain(std::span<const double> grad_left,
                  std::span<const double> hess_left,
                  std::span<const double> grad_right,
                  std::span<const double> hess_right,
                  const TreeParams& params);

struct SplitCandidate {
    int feature = -1;
    double threshold = 0.0;
    bool default_left = true;
    double gain = 0.0;
};

// Exact greedy search over all midpoints between consecutive distinct
// present values of each feature, trying missing rows on both sides and
// keeping the better direction. Rows route left iff x < threshold.
// Returns the highest-gain candidate with gain > 0, or nullopt. Ties break
// toward the lowest feature index, then the lowest threshold, then
// missing-left. missing may be null when the data has no gaps.
std::optional<SplitCandidate> find_best_split(
    std::span<const std::size_t> rows, const Matrix& features,
    const std::vector<std::uint8_t>* missing, const Matrix& grad,
    const Matrix& hess, const TreeParams& params);

Tree build_tree(std::span<const std::size_t> rows, const Matrix& features,
                const std::vector<std::uint8_t>* missing, const Matrix& grad,
                const Matrix& hess, const TreeParams& params);

// Leaf index reached by a feature row; missing values follow the split's
// stored default direction and x == threshold routes right.
std::size_t tree_leaf_index(const Tree& tree, std::span<const double> x,
                            std::span<const std::uint8_t> missing);

const std::vector<double>& tree_predict(const Tree& tree,
                                        std::span<const double> x,
                                        std::span<const std::uint8_t> missing);

}  // namespace qboost
