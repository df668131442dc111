#include "flotapinn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "flotapinn/errors.hpp"
#include "flotapinn/rng.hpp"
#include "oracles.hpp"

using namespace flotapinn;
using baselines::Features;
using baselines::ForestModel;
using baselines::ForestOptions;
using baselines::LinearModel;
using baselines::Targets;
using baselines::TreeModel;
using baselines::TreeOptions;

namespace {

struct Table {
    std::vector<Features> x;
    std::vector<Targets> y;
};

Table random_table(std::size_t n, std::uint64_t seed, double lo = -3.0, double hi = 3.0) {
    Rng rng(seed);
    Table t;
    t.x.resize(n);
    t.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (double& v : t.x[i]) v = rng.uniform(lo, hi);
        for (double& v : t.y[i]) v = rng.uniform(-5.0, 5.0);
    }
    return t;
}

// Feature-0 ramp with the remaining features pinned to zero.
Table ramp_table(const std::vector<double>& xs, const std::vector<Targets>& ys) {
    Table t;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        Features f{};
        f[0] = xs[i];
        t.x.push_back(f);
        t.y.push_back(ys[i]);
    }
    return t;
}

double sse_of(const std::vector<Targets>& ys) {
    if (ys.empty()) return 0.0;
    Targets mean{};
    for (const Targets& y : ys)
        for (int k = 0; k < 2; ++k) mean[k] += y[k];
    for (int k = 0; k < 2; ++k) mean[k] /= static_cast<double>(ys.size());
    double acc = 0.0;
    for (const Targets& y : ys)
        for (int k = 0; k < 2; ++k) acc += (y[k] - mean[k]) * (y[k] - mean[k]);
    return acc;
}

// Exhaustive depth-1 split search: every feature, every midpoint between
// distinct sorted values, first strict improvement in scan order wins.
struct BestSplit {
    int feature = -1;
    double threshold = 0.0;
};

BestSplit brute_force_split(const Table& t, int min_leaf) {
    BestSplit best;
    double best_sse = sse_of(t.y);
    for (int f = 0; f < data::kNumInputs; ++f) {
        std::vector<double> values;
        for (const Features& row : t.x) values.push_back(row[f]);
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t u = 0; u + 1 < values.size(); ++u) {
            const double thr = (values[u] + values[u + 1]) / 2.0;
            std::vector<Targets> left, right;
            for (std::size_t i = 0; i < t.x.size(); ++i) {
                if (t.x[i][f] <= thr)
                    left.push_back(t.y[i]);
                else
                    right.push_back(t.y[i]);
            }
            if (left.size() < static_cast<std::size_t>(min_leaf) ||
                right.size() < static_cast<std::size_t>(min_leaf))
                continue;
            const double sse = sse_of(left) + sse_of(right);
            if (sse < best_sse) {
                best_sse = sse;
                best = {f, thr};
            }
        }
    }
    return best;
}

} // namespace

TEST_CASE("split_xy separates schema inputs from targets") {
    data::Dataset ds;
    data::Row row;
    for (int c = 0; c < data::kNumColumns; ++c) row[c] = 10.0 * c;
    ds.rows.push_back(row);

    const baselines::TableView table = baselines::split_xy(ds);
    REQUIRE(table.x.size() == 1);
    for (int c = 0; c < data::kNumInputs; ++c) CHECK(table.x[0][c] == 10.0 * c);
    CHECK(table.y[0][0] == 10.0 * static_cast<int>(data::kCPTail));
    CHECK(table.y[0][1] == 10.0 * static_cast<int>(data::kCFConc));
}

TEST_CASE("linear regression reproduces an exact line through the origin") {
    const Table t = ramp_table({1, 2, 3}, {{{2, 0}, {4, -1}, {6, -2}}});
    // Output 0 is 2x, output 1 is 1 - x.  On 3 points the default jitter
    // shifts the solution by up to mu * |A^-1 w| ~ 3.4e-8, so the tolerance
    // sits just above that bound.
    std::vector<Targets> y{{2, 0}, {4, -1}, {6, -2}};
    const LinearModel model = baselines::linreg_fit(t.x, y);

    CHECK(std::fabs(model.weights[0][0] - 2.0) < 1e-7);
    CHECK(std::fabs(model.weights[0][1] + 1.0) < 1e-7);
    CHECK(std::fabs(model.intercept[0]) < 1e-7);
    CHECK(std::fabs(model.intercept[1] - 1.0) < 1e-7);
    for (int f = 1; f < data::kNumInputs; ++f) {
        CHECK(std::fabs(model.weights[f][0]) < 1e-8);
        CHECK(std::fabs(model.weights[f][1]) < 1e-8);
    }

    // Without the jitter the dead feature columns make the normal matrix
    // exactly singular; the jitter is what rescues this shape of data.
    CHECK_THROWS_AS(baselines::linreg_fit(t.x, y, 0.0), DataError);
}

TEST_CASE("constant targets give zero weights and the constant intercept") {
    Table t = random_table(100, 51);
    for (Targets& y : t.y) y = {7.25, -3.5};
    const LinearModel model = baselines::linreg_fit(t.x, t.y);
    for (int f = 0; f < data::kNumInputs; ++f)
        for (int k = 0; k < 2; ++k) CHECK(std::fabs(model.weights[f][k]) < 1e-6);
    CHECK(std::fabs(model.intercept[0] - 7.25) < 1e-6);
    CHECK(std::fabs(model.intercept[1] + 3.5) < 1e-6);
}

TEST_CASE("linear regression recovers a planted map on noiseless data") {
    Rng rng(53);
    Features w0, w1;
    for (double& v : w0) v = rng.uniform(-2.0, 2.0);
    for (double& v : w1) v = rng.uniform(-2.0, 2.0);
    const Targets b{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};

    Table t = random_table(500, 54);
    for (std::size_t i = 0; i < t.x.size(); ++i) {
        t.y[i] = b;
        for (int f = 0; f < data::kNumInputs; ++f) {
            t.y[i][0] += w0[f] * t.x[i][f];
            t.y[i][1] += w1[f] * t.x[i][f];
        }
    }

    const LinearModel model = baselines::linreg_fit(t.x, t.y);
    double max_err = 0.0;
    for (int f = 0; f < data::kNumInputs; ++f) {
        max_err = std::max(max_err, std::fabs(model.weights[f][0] - w0[f]));
        max_err = std::max(max_err, std::fabs(model.weights[f][1] - w1[f]));
    }
    max_err = std::max(max_err, std::fabs(model.intercept[0] - b[0]));
    max_err = std::max(max_err, std::fabs(model.intercept[1] - b[1]));
    CHECK(max_err < 1e-6);
}

TEST_CASE("linear model prediction is affine") {
    const Table t = random_table(60, 55);
    const LinearModel model = baselines::linreg_fit(t.x, t.y);

    Rng rng(56);
    for (int rep = 0; rep < 20; ++rep) {
        Features a, b, mix;
        for (double& v : a) v = rng.uniform(-5.0, 5.0);
        for (double& v : b) v = rng.uniform(-5.0, 5.0);
        const double alpha = rng.uniform(0.0, 1.0);
        for (int f = 0; f < data::kNumInputs; ++f)
            mix[f] = alpha * a[f] + (1.0 - alpha) * b[f];

        const Targets pa = model.predict(a);
        const Targets pb = model.predict(b);
        const Targets pm = model.predict(mix);
        for (int k = 0; k < 2; ++k) {
            const double want = alpha * pa[k] + (1.0 - alpha) * pb[k];
            CHECK(std::fabs(pm[k] - want) < 1e-10);
        }
    }
}

TEST_CASE("fit rejects empty, mismatched, and non-finite tables") {
    Table t = random_table(10, 57);
    CHECK_THROWS_AS(baselines::linreg_fit({}, {}), DataError);
    CHECK_THROWS_AS(
        baselines::linreg_fit(t.x, std::span<const Targets>(t.y.data(), t.y.size() - 1)),
        UsageError);
    t.x[4][2] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(baselines::linreg_fit(t.x, t.y), DataError);
    CHECK_THROWS_AS(baselines::tree_fit(t.x, t.y, {}), DataError);
    t.x[4][2] = 0.0;
    t.y[3][1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(baselines::forest_fit(t.x, t.y, {}), DataError);
}

TEST_CASE("depth-1 tree reproduces the four-point exhaustive split") {
    const Table t = ramp_table({0, 1, 2, 3}, {{{0, 0}, {0, 0}, {10, 10}, {10, 10}}});
    const TreeModel tree = baselines::tree_fit(t.x, t.y, {1, 1});

    REQUIRE(tree.nodes.size() == 3);
    CHECK(tree.nodes[0].feature == 0);
    CHECK(tree.nodes[0].threshold == 1.5);

    Features probe{};
    probe[0] = 0.7;
    CHECK(tree.predict(probe) == Targets{0, 0});
    probe[0] = 2.9;
    CHECK(tree.predict(probe) == Targets{10, 10});
}

TEST_CASE("depth-1 splits agree with a brute-force search on random tables") {
    Rng rng(59);
    for (int rep = 0; rep < 30; ++rep) {
        // Coarse value grids provoke duplicate values and exact ties.
        Table t;
        const std::size_t n = 10 + rng.below(40);
        for (std::size_t i = 0; i < n; ++i) {
            Features f;
            for (double& v : f) v = static_cast<double>(rng.below(5));
            Targets y{static_cast<double>(rng.below(4)), static_cast<double>(rng.below(4))};
            t.x.push_back(f);
            t.y.push_back(y);
        }
        const int min_leaf = 1 + static_cast<int>(rng.below(3));
        const BestSplit want = brute_force_split(t, min_leaf);
        const TreeModel tree = baselines::tree_fit(t.x, t.y, {1, min_leaf});

        if (want.feature < 0) {
            CHECK(tree.nodes.size() == 1);
            continue;
        }
        REQUIRE(tree.nodes.size() == 3);
        CHECK(tree.nodes[0].feature == want.feature);
        CHECK(tree.nodes[0].threshold == want.threshold);
    }
}

TEST_CASE("split ties resolve to the lowest feature, then the lowest threshold") {
    // Feature 1 duplicates feature 0, so every split is tied across them.
    Table t = ramp_table({0, 1, 2, 3}, {{{0, 0}, {0, 0}, {10, 10}, {10, 10}}});
    for (std::size_t i = 0; i < t.x.size(); ++i) t.x[i][1] = t.x[i][0];
    const TreeModel dup = baselines::tree_fit(t.x, t.y, {1, 1});
    CHECK(dup.nodes[0].feature == 0);

    // Thresholds 0.5 and 2.5 tie on this symmetric pattern; 1.5 is worse.
    const Table sym = ramp_table({0, 1, 2, 3}, {{{0, 0}, {10, 10}, {10, 10}, {0, 0}}});
    const TreeModel tree = baselines::tree_fit(sym.x, sym.y, {1, 1});
    CHECK(tree.nodes[0].feature == 0);
    CHECK(tree.nodes[0].threshold == 0.5);
}

TEST_CASE("constant targets collapse to a single leaf at any depth") {
    Table t = random_table(50, 61);
    for (Targets& y : t.y) y = {4.5, -1.25};
    const TreeModel tree = baselines::tree_fit(t.x, t.y, {12, 1});
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].feature == -1);
    CHECK(tree.predict(t.x[0]) == Targets{4.5, -1.25});
}

TEST_CASE("depth zero predicts the global mean") {
    const Table t = ramp_table({0, 1, 2, 3}, {{{0, 8}, {2, 8}, {4, 0}, {10, 0}}});
    const TreeModel tree = baselines::tree_fit(t.x, t.y, {0, 1});
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.predict(t.x[2]) == Targets{4.0, 4.0});
}

TEST_CASE("min-leaf bounds the training count of every leaf") {
    const Table t = random_table(120, 63);
    const int min_leaf = 7;
    const TreeModel tree = baselines::tree_fit(t.x, t.y, {12, min_leaf});

    std::vector<int> counts(tree.nodes.size(), 0);
    for (const Features& row : t.x) {
        int node = 0;
        while (tree.nodes[node].feature >= 0)
            node = row[tree.nodes[node].feature] <= tree.nodes[node].threshold
                       ? tree.nodes[node].left
                       : tree.nodes[node].right;
        ++counts[node];
    }
    for (std::size_t i = 0; i < tree.nodes.size(); ++i)
        if (tree.nodes[i].feature < 0) CHECK(counts[i] >= min_leaf);
}

TEST_CASE("an unbounded tree interpolates distinct training points") {
    const Table t = random_table(32, 65);
    const TreeModel tree = baselines::tree_fit(t.x, t.y, {32, 1});
    for (std::size_t i = 0; i < t.x.size(); ++i) {
        const Targets p = tree.predict(t.x[i]);
        CHECK(oracle::rel_err(p[0], t.y[i][0], 1e-9) < 1e-12);
        CHECK(oracle::rel_err(p[1], t.y[i][1], 1e-9) < 1e-12);
    }
}

TEST_CASE("a degenerate forest equals the plain tree") {
    const Table t = random_table(200, 67);
    const TreeModel tree = baselines::tree_fit(t.x, t.y, {8, 2});

    ForestOptions opt;
    opt.n_trees = 1;
    opt.max_depth = 8;
    opt.min_leaf = 2;
    opt.m_features = data::kNumInputs;
    opt.bootstrap = false;
    const ForestModel forest = baselines::forest_fit(t.x, t.y, opt);

    Rng rng(68);
    for (int rep = 0; rep < 50; ++rep) {
        Features probe;
        for (double& v : probe) v = rng.uniform(-4.0, 4.0);
        CHECK(forest.predict(probe) == tree.predict(probe));
    }
}

TEST_CASE("forests are deterministic per seed and sensitive to it") {
    const Table t = random_table(150, 69);
    ForestOptions opt;
    opt.n_trees = 10;
    opt.seed = 42;
    const ForestModel a = baselines::forest_fit(t.x, t.y, opt);
    const ForestModel b = baselines::forest_fit(t.x, t.y, opt);
    CHECK(baselines::to_json(a).dump() == baselines::to_json(b).dump());

    opt.seed = 43;
    const ForestModel c = baselines::forest_fit(t.x, t.y, opt);
    CHECK(baselines::to_json(a).dump() != baselines::to_json(c).dump());
}

TEST_CASE("forest predictions stay inside the envelope of tree predictions") {
    const Table t = random_table(150, 71);
    ForestOptions opt;
    opt.n_trees = 15;
    const ForestModel forest = baselines::forest_fit(t.x, t.y, opt);

    Rng rng(72);
    for (int rep = 0; rep < 30; ++rep) {
        Features probe;
        for (double& v : probe) v = rng.uniform(-4.0, 4.0);
        const Targets p = forest.predict(probe);
        for (int k = 0; k < 2; ++k) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (const TreeModel& tree : forest.trees) {
                lo = std::min(lo, tree.predict(probe)[k]);
                hi = std::max(hi, tree.predict(probe)[k]);
            }
            CHECK(p[k] >= lo - 1e-12);
            CHECK(p[k] <= hi + 1e-12);
        }
    }
}

TEST_CASE("bagging beats a lone overfit tree on noisy data in most seeds") {
    int forest_wins = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(Rng::mix(seed, 7));
        auto sample = [&](std::size_t n) {
            Table t;
            t.x.resize(n);
            t.y.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (double& v : t.x[i]) v = rng.uniform(-2.0, 2.0);
                const Features& f = t.x[i];
                const double base = std::sin(2.0 * f[0]) + f[1] * f[2] + 0.5 * f[3];
                t.y[i][0] = base + rng.normal(0.0, 0.4);
                t.y[i][1] = -base + 0.3 * f[4] + rng.normal(0.0, 0.4);
            }
            return t;
        };
        const Table train = sample(300);
        const Table test = sample(300);

        const TreeModel tree = baselines::tree_fit(train.x, train.y, {10, 1});
        ForestOptions opt;
        opt.n_trees = 30;
        opt.max_depth = 10;
        opt.m_features = 6;
        opt.seed = seed;
        const ForestModel forest = baselines::forest_fit(train.x, train.y, opt);

        double tree_mse = 0.0, forest_mse = 0.0;
        for (std::size_t i = 0; i < test.x.size(); ++i) {
            const Targets pt = tree.predict(test.x[i]);
            const Targets pf = forest.predict(test.x[i]);
            for (int k = 0; k < 2; ++k) {
                tree_mse += (pt[k] - test.y[i][k]) * (pt[k] - test.y[i][k]);
                forest_mse += (pf[k] - test.y[i][k]) * (pf[k] - test.y[i][k]);
            }
        }
        if (forest_mse <= tree_mse) ++forest_wins;
    }
    CHECK(forest_wins >= 8);
}

TEST_CASE("fitted models survive json round trips") {
    const Table t = random_table(80, 73);

    const LinearModel lin = baselines::linreg_fit(t.x, t.y);
    const LinearModel lin2 = baselines::linear_from_json(baselines::to_json(lin));
    CHECK(lin2.weights == lin.weights);
    CHECK(lin2.intercept == lin.intercept);
    CHECK(lin2.jitter == lin.jitter);

    const TreeModel tree = baselines::tree_fit(t.x, t.y, {6, 2});
    const TreeModel tree2 = baselines::tree_from_json(baselines::to_json(tree));
    REQUIRE(tree2.nodes.size() == tree.nodes.size());
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
        CHECK(tree2.nodes[i].feature == tree.nodes[i].feature);
        CHECK(tree2.nodes[i].threshold == tree.nodes[i].threshold);
        CHECK(tree2.nodes[i].value == tree.nodes[i].value);
    }

    ForestOptions opt;
    opt.n_trees = 5;
    const ForestModel forest = baselines::forest_fit(t.x, t.y, opt);
    const ForestModel forest2 = baselines::forest_from_json(baselines::to_json(forest));
    CHECK(forest2.options.seed == forest.options.seed);
    for (int rep = 0; rep < 10; ++rep) CHECK(forest2.predict(t.x[rep]) == forest.predict(t.x[rep]));

    nlohmann::json bad = baselines::to_json(tree);
    bad["nodes"][0]["feature"] = 99;
    CHECK_THROWS_AS(baselines::tree_from_json(bad), FormatError);
}

TEST_CASE("invalid options are rejected") {
    const Table t = random_table(20, 75);
    CHECK_THROWS_AS(baselines::tree_fit(t.x, t.y, {-1, 1}), ConfigError);
    CHECK_THROWS_AS(baselines::tree_fit(t.x, t.y, {4, 0}), ConfigError);

    ForestOptions opt;
    opt.n_trees = 0;
    CHECK_THROWS_AS(baselines::forest_fit(t.x, t.y, opt), ConfigError);
    opt.n_trees = 1;
    opt.m_features = 0;
    CHECK_THROWS_AS(baselines::forest_fit(t.x, t.y, opt), ConfigError);
    opt.m_features = 13;
    CHECK_THROWS_AS(baselines::forest_fit(t.x, t.y, opt), ConfigError);
    CHECK_THROWS_AS(baselines::linreg_fit(t.x, t.y, -1.0), UsageError);
}
