#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "flotapinn/data.hpp"

#include "json.hpp"

namespace flotapinn::baselines {

using Features = std::array<double, data::kNumInputs>;
using Targets = std::array<double, data::kNumTargets>;

// Dataset rows split into model inputs and targets.
struct TableView {
    std::vector<Features> x;
    std::vector<Targets> y;
};

TableView split_xy(const data::Dataset& ds);

inline constexpr double kDefaultJitter = 1e-8;

// Ridge-jittered least squares over the 12 inputs plus an intercept.
struct LinearModel {
    std::array<Targets, data::kNumInputs> weights{}; // weights[feature][output]
    Targets intercept{};
    double jitter = kDefaultJitter;

    Targets predict(const Features& x) const;
};

// Solves (X'X + jitter I) W = X'Y with an appended intercept column, by
// Gaussian elimination with partial pivoting.
LinearModel linreg_fit(std::span<const Features> x, std::span<const Targets> y,
                       double jitter = kDefaultJitter);

// CART regression tree over both outputs jointly (summed SSE).
struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    Targets value{}; // leaf mean
};

struct TreeModel {
    std::vector<TreeNode> nodes; // node 0 is the root; x <= threshold goes left

    Targets predict(const Features& x) const;
};

struct TreeOptions {
    int max_depth = 8;
    int min_leaf = 1;
};

// Greedy exhaustive search over midpoints of sorted distinct feature values.
// A split must strictly reduce the summed SSE; ties resolve to the lowest
// feature index, then the lowest threshold.
TreeModel tree_fit(std::span<const Features> x, std::span<const Targets> y,
                   const TreeOptions& opt);

struct ForestOptions {
    int n_trees = 100;
    int max_depth = 8;
    int min_leaf = 1;
    int m_features = 4; // features drawn per split
    bool bootstrap = true;
    std::uint64_t seed = 1;
};

struct ForestModel {
    std::vector<TreeModel> trees;
    ForestOptions options;

    Targets predict(const Features& x) const; // mean over trees
};

// Each tree fits a seeded bootstrap resample on its own RNG stream, so the
// result is identical whether trees are fit serially or concurrently.
ForestModel forest_fit(std::span<const Features> x, std::span<const Targets> y,
                       const ForestOptions& opt);

nlohmann::json to_json(const LinearModel& model);
LinearModel linear_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TreeModel& model);
TreeModel tree_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ForestModel& model);
ForestModel forest_from_json(const nlohmann::json& j);

} // namespace flotapinn::baselines
