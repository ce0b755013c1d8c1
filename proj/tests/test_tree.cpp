#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "qboost/random.hpp"
#include "qboost/tree.hpp"

using namespace qboost;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TreeParams params_with(int max_depth, double lambda, double gamma,
                       double mcw = 0.0, double mds = kInf) {
    TreeParams p;
    p.max_depth = max_depth;
    p.lambda = lambda;
    p.gamma = gamma;
    p.min_child_weight = mcw;
    p.max_delta_step = mds;
    return p;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
}

// 4 rows, 1 feature, the worked split example: values 1..4, gradients
// -1,-1,1,1, unit hessians.
struct FourRowFixture {
    Matrix features{4, 1};
    std::vector<std::uint8_t> missing = std::vector<std::uint8_t>(4, 0);
    Matrix grad{4, 1};
    Matrix hess{4, 1, 1.0};

    FourRowFixture() {
        for (std::size_t i = 0; i < 4; ++i)
            features.at(i, 0) = static_cast<double>(i + 1);
        grad.at(0, 0) = -1.0;
        grad.at(1, 0) = -1.0;
        grad.at(2, 0) = 1.0;
        grad.at(3, 0) = 1.0;
    }
};

}  // namespace

TEST_CASE("leaf_weight applies the newton formula with clamping") {
    const std::vector<double> g{0.9};
    const std::vector<double> h{6.366};
    CHECK(leaf_weight(g, h, 1.0, kInf)[0] ==
          doctest::Approx(-0.9 / 7.366).epsilon(1e-12));

    const std::vector<double> zeros{0.0, 0.0};
    const std::vector<double> any_h{3.0, 0.5};
    for (double w : leaf_weight(zeros, any_h, 0.5, kInf)) CHECK(w == 0.0);

    // Raw value -100, cap binds at 0.5.
    const std::vector<double> g_big{10.0}, h_small{0.1};
    CHECK(leaf_weight(g_big, h_small, 0.0, 0.5)[0] == doctest::Approx(-0.5));

    const std::vector<double> one{1.0}, zero_h{0.0}, neg_h{-1.0};
    CHECK_THROWS(leaf_weight(one, zero_h, 0.0, kInf));
    CHECK_THROWS(leaf_weight(one, neg_h, 1.0, kInf));
}

TEST_CASE("split_gain hand example and structure") {
    const std::vector<double> gl{1.0}, gr{-1.0}, hl{1.0}, hr{1.0};
    CHECK(split_gain(gl, hl, gr, hr, params_with(2, 1.0, 0.0)) ==
          doctest::Approx(0.5));
    // Symmetric in swapping sides.
    CHECK(split_gain(gr, hr, gl, hl, params_with(2, 1.0, 0.0)) ==
          doctest::Approx(0.5));
    // gamma is an additive penalty.
    CHECK(split_gain(gl, hl, gr, hr, params_with(2, 1.0, 0.75)) ==
          doctest::Approx(0.5 - 0.75));
    // A split that moves nothing gains exactly -gamma.
    const std::vector<double> zero{0.0};
    CHECK(split_gain(zero, zero, gl, hl, params_with(2, 1.0, 0.3)) ==
          doctest::Approx(-0.3));

    // Multi-output gain is the sum of per-output gains.
    Rng rng(61);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> g2l(3), g2r(3), h2l(3), h2r(3);
        double expected = 0.0;
        const TreeParams p = params_with(2, rng.uniform(0.0, 2.0), 0.0);
        for (std::size_t j = 0; j < 3; ++j) {
            g2l[j] = rng.uniform(-2.0, 2.0);
            g2r[j] = rng.uniform(-2.0, 2.0);
            h2l[j] = rng.uniform(0.1, 2.0);
            h2r[j] = rng.uniform(0.1, 2.0);
            expected += split_gain({&g2l[j], 1}, {&h2l[j], 1}, {&g2r[j], 1},
                                   {&h2r[j], 1}, p);
        }
        const double combined = split_gain(g2l, h2l, g2r, h2r, p);
        CHECK(combined == doctest::Approx(expected).epsilon(1e-12));
    }
    const std::vector<double> one{1.0}, zero_h{0.0};
    CHECK_THROWS(split_gain(one, zero_h, one, hl, params_with(2, 0.0, 0.0)));
}

TEST_CASE("find_best_split locates the worked example split") {
    FourRowFixture fx;
    const auto rows = all_rows(4);
    const auto split = find_best_split(rows, fx.features, &fx.missing, fx.grad,
                                       fx.hess, params_with(2, 0.0, 0.0));
    REQUIRE(split.has_value());
    CHECK(split->feature == 0);
    CHECK(split->threshold == doctest::Approx(2.5));
    CHECK(split->gain == doctest::Approx(2.0));

    // Brute force over the three candidate thresholds.
    double best = -kInf;
    for (double thr : {1.5, 2.5, 3.5}) {
        std::vector<double> gl(1, 0.0), hl(1, 0.0), gr(1, 0.0), hr(1, 0.0);
        for (std::size_t r = 0; r < 4; ++r) {
            const bool left = fx.features.at(r, 0) < thr;
            (left ? gl : gr)[0] += fx.grad.at(r, 0);
            (left ? hl : hr)[0] += fx.hess.at(r, 0);
        }
        best = std::max(best, split_gain(gl, hl, gr, hr, params_with(2, 0.0, 0.0)));
    }
    CHECK(split->gain == doctest::Approx(best));
}

TEST_CASE("find_best_split returns nothing when every gain is non-positive") {
    FourRowFixture fx;
    fx.grad = Matrix(4, 1, 0.0);
    const auto split = find_best_split(all_rows(4), fx.features, &fx.missing,
                                       fx.grad, fx.hess, params_with(2, 0.0, 0.5));
    CHECK_FALSE(split.has_value());
}

TEST_CASE("missing rows pick the higher-gain default direction") {
    FourRowFixture fx;
    fx.missing[2] = 1;  // row 2 (grad +1) has no feature value
    const auto split = find_best_split(all_rows(4), fx.features, &fx.missing,
                                       fx.grad, fx.hess, params_with(2, 0.0, 0.0));
    REQUIRE(split.has_value());

    // Evaluate both directions for the chosen threshold by hand.
    auto gain_for = [&](bool missing_left) {
        std::vector<double> gl(1, 0.0), hl(1, 0.0), gr(1, 0.0), hr(1, 0.0);
        for (std::size_t r = 0; r < 4; ++r) {
            bool left;
            if (fx.missing[r]) {
                left = missing_left;
            } else {
                left = fx.features.at(r, 0) < split->threshold;
            }
            (left ? gl : gr)[0] += fx.grad.at(r, 0);
            (left ? hl : hr)[0] += fx.hess.at(r, 0);
        }
        return split_gain(gl, hl, gr, hr, params_with(2, 0.0, 0.0));
    };
    const double chosen = gain_for(split->default_left);
    const double other = gain_for(!split->default_left);
    CHECK(chosen >= other);
    CHECK(split->gain == doctest::Approx(chosen));
}

TEST_CASE("min_child_weight zero never blocks a split") {
    // All-zero hessians: child weight sums are zero, which still satisfies
    // the >= 0 requirement, and lambda keeps the weights finite.
    FourRowFixture fx;
    fx.hess = Matrix(4, 1, 0.0);
    const auto split = find_best_split(all_rows(4), fx.features, &fx.missing,
                                       fx.grad, fx.hess, params_with(2, 1.0, 0.0, 0.0));
    CHECK(split.has_value());
}

TEST_CASE("build_tree with max_depth 1 yields the global leaf") {
    FourRowFixture fx;
    const Tree tree = build_tree(all_rows(4), fx.features, &fx.missing, fx.grad,
                                 fx.hess, params_with(1, 0.5, 0.0));
    CHECK(tree.leaf_count == 1);
    CHECK(tree.depth == 1);
    REQUIRE(tree.nodes.size() == 1);
    // Global sums: G = 0, H = 4.
    CHECK(tree.nodes[0].weights[0] == doctest::Approx(0.0));
}

TEST_CASE("build_tree reproduces the worked two-leaf example") {
    FourRowFixture fx;
    const Tree tree = build_tree(all_rows(4), fx.features, &fx.missing, fx.grad,
                                 fx.hess, params_with(2, 0.0, 0.0));
    CHECK(tree.leaf_count == 2);
    CHECK(tree.depth == 2);
    const TreeNode& root = tree.nodes[0];
    REQUIRE_FALSE(root.is_leaf);
    CHECK(root.threshold == doctest::Approx(2.5));
    // Left leaf: G=-2, H=2 -> +1; right leaf: G=2, H=2 -> -1.
    const std::vector<std::uint8_t> no_miss(1, 0);
    const std::vector<double> x_left{1.0}, x_right{4.0};
    CHECK(tree_predict(tree, x_left, no_miss)[0] == doctest::Approx(1.0));
    CHECK(tree_predict(tree, x_right, no_miss)[0] == doctest::Approx(-1.0));
    // x = 2 sits below the 2.5 threshold, x = 3 above.
    CHECK(tree_predict(tree, std::vector<double>{2.0}, no_miss)[0] ==
          doctest::Approx(1.0));
    CHECK(tree_predict(tree, std::vector<double>{3.0}, no_miss)[0] ==
          doctest::Approx(-1.0));
}

TEST_CASE("routing semantics: strict less goes left, equality right") {
    FourRowFixture fx;
    // Values 1,3 produce threshold 2 exactly.
    fx.features.at(0, 0) = 1.0;
    fx.features.at(1, 0) = 1.0;
    fx.features.at(2, 0) = 3.0;
    fx.features.at(3, 0) = 3.0;
    const Tree tree = build_tree(all_rows(4), fx.features, &fx.missing, fx.grad,
                                 fx.hess, params_with(2, 0.0, 0.0));
    REQUIRE_FALSE(tree.nodes[0].is_leaf);
    CHECK(tree.nodes[0].threshold == doctest::Approx(2.0));
    const std::vector<std::uint8_t> no_miss(1, 0);
    CHECK(tree_predict(tree, std::vector<double>{2.0}, no_miss)[0] ==
          doctest::Approx(-1.0));  // equality routes right
    CHECK(tree_predict(tree, std::vector<double>{1.9999}, no_miss)[0] ==
          doctest::Approx(1.0));

    SUBCASE("missing feature follows the stored default") {
        const std::vector<std::uint8_t> miss(1, 1);
        const std::vector<double> x{0.0};
        const double expected =
            tree.nodes[0].default_left
                ? tree_predict(tree, std::vector<double>{0.0}, no_miss)[0]
                : tree_predict(tree, std::vector<double>{9.0}, no_miss)[0];
        CHECK(tree_predict(tree, x, miss)[0] == doctest::Approx(expected));
    }
    SUBCASE("feature index out of range is reported") {
        const std::vector<double> empty;
        const std::vector<std::uint8_t> none;
        CHECK_THROWS_AS((void)tree_predict(tree, empty, none), std::out_of_range);
    }
}

TEST_CASE("single-leaf trees answer every query with their weights") {
    Matrix features(2, 1, 0.0);
    features.at(1, 0) = 1.0;
    std::vector<std::uint8_t> missing(2, 0);
    Matrix grad(2, 1, 1.0);
    Matrix hess(2, 1, 1.0);
    const Tree tree = build_tree(all_rows(2), features, &missing, grad, hess,
                                 params_with(1, 1.0, 0.0));
    const std::vector<std::uint8_t> no_miss(1, 0);
    for (double x : {-10.0, 0.0, 10.0})
        CHECK(tree_predict(tree, std::vector<double>{x}, no_miss)[0] ==
              doctest::Approx(-2.0 / 3.0));
}

namespace {

struct RandomProblem {
    Matrix features;
    std::vector<std::uint8_t> missing;
    Matrix grad;
    Matrix hess;
};

RandomProblem random_problem(Rng& rng, std::size_t max_rows, std::size_t max_cols,
                             std::size_t n_outputs, double missing_rate) {
    const std::size_t n = 2 + rng.below(max_rows - 1);
    const std::size_t d = 1 + rng.below(max_cols);
    RandomProblem p{Matrix(n, d), std::vector<std::uint8_t>(n * d, 0),
                    Matrix(n, n_outputs), Matrix(n, n_outputs)};
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            if (rng.uniform() < missing_rate) {
                p.missing[i * d + j] = 1;
                p.features.at(i, j) = std::nan("");
            } else {
                p.features.at(i, j) = rng.uniform(-3.0, 3.0);
            }
        }
        for (std::size_t j = 0; j < n_outputs; ++j) {
            p.grad.at(i, j) = rng.uniform(-2.0, 2.0);
            p.hess.at(i, j) = rng.uniform(0.0, 2.0);
        }
    }
    return p;
}

}  // namespace

TEST_CASE("stored leaf weights re-derive exactly from leaf sums") {
    Rng rng(67);
    for (int rep = 0; rep < 30; ++rep) {
        const RandomProblem p = random_problem(rng, 40, 3, 2, 0.1);
        const double lambda = rng.uniform(0.1, 2.0);
        const Tree tree = build_tree(all_rows(p.features.rows()), p.features,
                                     &p.missing, p.grad, p.hess,
                                     params_with(4, lambda, 0.0));
        // Route every row, re-accumulate sums per leaf, re-derive weights.
        std::vector<std::vector<double>> gsum(tree.nodes.size(),
                                              std::vector<double>(2, 0.0));
        std::vector<std::vector<double>> hsum(tree.nodes.size(),
                                              std::vector<double>(2, 0.0));
        for (std::size_t r = 0; r < p.features.rows(); ++r) {
            std::span<const std::uint8_t> miss(
                p.missing.data() + r * p.features.cols(), p.features.cols());
            const std::size_t leaf = tree_leaf_index(tree, p.features.row(r), miss);
            for (std::size_t j = 0; j < 2; ++j) {
                gsum[leaf][j] += p.grad.at(r, j);
                hsum[leaf][j] += p.hess.at(r, j);
            }
        }
        for (std::size_t idx = 0; idx < tree.nodes.size(); ++idx) {
            if (!tree.nodes[idx].is_leaf) continue;
            const auto expected =
                leaf_weight(gsum[idx], hsum[idx], lambda, kInf);
            CHECK(tree.nodes[idx].weights == expected);
        }
    }
}

TEST_CASE("small-instance optimality against brute force") {
    // Exact greedy with depth <= 2 must match exhaustive enumeration of
    // every midpoint split (and the lone leaf).
    Rng rng(71);
    for (int rep = 0; rep < 60; ++rep) {
        const RandomProblem p = random_problem(rng, 12, 2, 2, 0.15);
        const double lambda = rng.uniform(0.05, 2.0);
        const double gamma = rng.uniform(0.0, 0.4);
        const Tree tree = build_tree(all_rows(p.features.rows()), p.features,
                                     &p.missing, p.grad, p.hess,
                                     params_with(2, lambda, gamma));
        const double built = oracles::tree_objective(tree, p.features, p.missing,
                                                     p.grad, p.hess, lambda, gamma);
        const double best = oracles::best_depth2_objective(
            p.features, p.missing, p.grad, p.hess, lambda, gamma);
        CHECK(built == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("accepted splits strictly improve the objective") {
    Rng rng(73);
    for (int rep = 0; rep < 20; ++rep) {
        const RandomProblem p = random_problem(rng, 30, 2, 2, 0.1);
        const double lambda = rng.uniform(0.1, 1.0);
        const double gamma = rng.uniform(0.0, 0.2);
        const Tree deep = build_tree(all_rows(p.features.rows()), p.features,
                                     &p.missing, p.grad, p.hess,
                                     params_with(4, lambda, gamma));
        const Tree stump = build_tree(all_rows(p.features.rows()), p.features,
                                      &p.missing, p.grad, p.hess,
                                      params_with(1, lambda, gamma));
        const double deep_obj = oracles::tree_objective(
            deep, p.features, p.missing, p.grad, p.hess, lambda, gamma);
        const double stump_obj = oracles::tree_objective(
            stump, p.features, p.missing, p.grad, p.hess, lambda, gamma);
        CHECK(deep_obj <= stump_obj + 1e-12);
        if (deep.leaf_count > 1) CHECK(deep_obj < stump_obj);
    }
}

TEST_CASE("max_depth bounds every root-to-leaf path") {
    Rng rng(79);
    for (int max_depth : {1, 2, 3, 4}) {
        const RandomProblem p = random_problem(rng, 60, 2, 2, 0.05);
        const Tree tree = build_tree(all_rows(p.features.rows()), p.features,
                                     &p.missing, p.grad, p.hess,
                                     params_with(max_depth, 0.5, 0.0));
        CHECK(tree.depth <= max_depth);
        int leaves = 0;
        for (const TreeNode& node : tree.nodes)
            if (node.is_leaf) ++leaves;
        CHECK(leaves == tree.leaf_count);
    }
}

TEST_CASE("max_delta_step caps every leaf weight") {
    Rng rng(83);
    const RandomProblem p = random_problem(rng, 30, 2, 3, 0.0);
    const TreeParams params = params_with(3, 0.0, 0.0, 0.0, 0.25);
    Matrix hess = p.hess;
    for (double& h : hess.data()) h = std::min(h, 0.05);  // force big raw steps
    const Tree tree = build_tree(all_rows(p.features.rows()), p.features,
                                 &p.missing, p.grad, hess, params);
    for (const TreeNode& node : tree.nodes) {
        if (!node.is_leaf) continue;
        for (double w : node.weights) CHECK(std::fabs(w) <= 0.25 + 1e-15);
    }
}
