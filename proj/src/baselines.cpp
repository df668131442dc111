#include "flotapinn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "flotapinn/errors.hpp"
#include "flotapinn/rng.hpp"

namespace flotapinn::baselines {

namespace {

constexpr int kF = data::kNumInputs;
constexpr int kO = data::kNumTargets;

void check_table(std::span<const Features> x, std::span<const Targets> y, const char* where) {
    if (x.empty()) throw DataError(std::string(where) + ": empty dataset");
    if (x.size() != y.size())
        throw UsageError(std::string(where) + ": feature and target row counts differ");
    for (const Features& row : x)
        for (double v : row)
            if (!std::isfinite(v)) throw DataError(std::string(where) + ": non-finite feature");
    for (const Targets& row : y)
        for (double v : row)
            if (!std::isfinite(v)) throw DataError(std::string(where) + ": non-finite target");
}

} // namespace

TableView split_xy(const data::Dataset& ds) {
    TableView table;
    table.x.reserve(ds.size());
    table.y.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        table.x.push_back(ds.inputs(i));
        table.y.push_back(ds.targets(i));
    }
    return table;
}

Targets LinearModel::predict(const Features& x) const {
    Targets out = intercept;
    for (int f = 0; f < kF; ++f)
        for (int k = 0; k < kO; ++k) out[k] += weights[f][k] * x[f];
    return out;
}

LinearModel linreg_fit(std::span<const Features> x, std::span<const Targets> y, double jitter) {
    check_table(x, y, "linreg_fit");
    if (jitter < 0.0) throw UsageError("linreg_fit: jitter must be nonnegative");

    // Augmented design: features 0..11, intercept column 12.
    constexpr int n = kF + 1;
    std::array<std::array<double, n>, n> a{};
    std::array<std::array<double, kO>, n> b{};

    auto aug = [&](const Features& row, int i) { return i < kF ? row[i] : 1.0; };
    for (std::size_t r = 0; r < x.size(); ++r) {
        for (int i = 0; i < n; ++i) {
            const double xi = aug(x[r], i);
            for (int j = i; j < n; ++j) a[i][j] += xi * aug(x[r], j);
            for (int k = 0; k < kO; ++k) b[i][k] += xi * y[r][k];
        }
    }
    for (int i = 0; i < n; ++i) {
        a[i][i] += jitter;
        for (int j = 0; j < i; ++j) a[i][j] = a[j][i];
    }

    // Gaussian elimination with partial pivoting, both right-hand sides.
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
        if (a[pivot][col] == 0.0)
            throw DataError("linreg_fit: singular normal equations");
        std::swap(a[col], a[pivot]);
        std::swap(b[col], b[pivot]);
        for (int r = col + 1; r < n; ++r) {
            const double factor = a[r][col] / a[col][col];
            if (factor == 0.0) continue;
            for (int j = col; j < n; ++j) a[r][j] -= factor * a[col][j];
            for (int k = 0; k < kO; ++k) b[r][k] -= factor * b[col][k];
        }
    }
    std::array<std::array<double, kO>, n> w{};
    for (int r = n - 1; r >= 0; --r) {
        for (int k = 0; k < kO; ++k) {
            double acc = b[r][k];
            for (int j = r + 1; j < n; ++j) acc -= a[r][j] * w[j][k];
            w[r][k] = acc / a[r][r];
        }
    }

    LinearModel model;
    model.jitter = jitter;
    for (int f = 0; f < kF; ++f)
        for (int k = 0; k < kO; ++k) model.weights[f][k] = w[f][k];
    for (int k = 0; k < kO; ++k) model.intercept[k] = w[kF][k];
    return model;
}

Targets TreeModel::predict(const Features& x) const {
    int node = 0;
    while (nodes[node].feature >= 0)
        node = x[nodes[node].feature] <= nodes[node].threshold ? nodes[node].left
                                                               : nodes[node].right;
    return nodes[node].value;
}

namespace {

struct TreeBuilder {
    std::span<const Features> x;
    std::span<const Targets> y;
    TreeOptions opt;
    Rng* rng = nullptr; // feature subsampling stream, forests only
    int m = kF;
    std::vector<TreeNode> nodes;

    int build(std::vector<int>& idx, int depth) {
        const auto n = static_cast<double>(idx.size());
        Targets sum{};
        for (int i : idx)
            for (int k = 0; k < kO; ++k) sum[k] += y[i][k];
        Targets mean;
        for (int k = 0; k < kO; ++k) mean[k] = sum[k] / n;

        bool constant = true;
        for (std::size_t p = 1; p < idx.size() && constant; ++p)
            constant = y[idx[p]] == y[idx[0]];

        int best_feature = -1;
        double best_threshold = 0.0;
        std::size_t best_left = 0;
        std::vector<int> features;
        if (depth < opt.max_depth && !constant &&
            idx.size() >= 2 * static_cast<std::size_t>(opt.min_leaf)) {
            double parent_sse = 0.0;
            for (int i : idx)
                for (int k = 0; k < kO; ++k) {
                    const double d = y[i][k] - mean[k];
                    parent_sse += d * d;
                }
            double best_sse = parent_sse;

            features = candidate_features();
            std::vector<std::pair<double, int>> order(idx.size());
            for (int f : features) {
                for (std::size_t p = 0; p < idx.size(); ++p)
                    order[p] = {x[idx[p]][f], idx[p]};
                std::sort(order.begin(), order.end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });

                // Prefix scan: SSE(S) = sum y^2 - (sum y)^2 / |S| per output.
                Targets left_sum{}, left_sq{};
                Targets total_sq{};
                for (std::size_t p = 0; p < idx.size(); ++p)
                    for (int k = 0; k < kO; ++k)
                        total_sq[k] += y[order[p].second][k] * y[order[p].second][k];

                for (std::size_t p = 0; p + 1 < order.size(); ++p) {
                    for (int k = 0; k < kO; ++k) {
                        const double v = y[order[p].second][k];
                        left_sum[k] += v;
                        left_sq[k] += v * v;
                    }
                    if (order[p].first == order[p + 1].first) continue;
                    const std::size_t nl = p + 1;
                    const std::size_t nr = order.size() - nl;
                    if (nl < static_cast<std::size_t>(opt.min_leaf) ||
                        nr < static_cast<std::size_t>(opt.min_leaf))
                        continue;
                    double sse = 0.0;
                    for (int k = 0; k < kO; ++k) {
                        const double rs = sum[k] - left_sum[k];
                        sse += left_sq[k] - left_sum[k] * left_sum[k] / static_cast<double>(nl);
                        sse += (total_sq[k] - left_sq[k]) - rs * rs / static_cast<double>(nr);
                    }
                    if (sse < best_sse) {
                        best_sse = sse;
                        best_feature = f;
                        best_threshold = (order[p].first + order[p + 1].first) / 2.0;
                        best_left = nl;
                    }
                }
            }
        }

        const int id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        if (best_feature < 0) {
            nodes[id].value = mean;
            return id;
        }

        std::vector<int> left, right;
        left.reserve(best_left);
        right.reserve(idx.size() - best_left);
        for (int i : idx) {
            if (x[i][best_feature] <= best_threshold)
                left.push_back(i);
            else
                right.push_back(i);
        }
        nodes[id].feature = best_feature;
        nodes[id].threshold = best_threshold;
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        nodes[id].left = l;
        nodes[id].right = r;
        return id;
    }

    // Ascending feature order keeps the lowest-index tie-break meaningful
    // whether or not the split works on a subsample.
    std::vector<int> candidate_features() {
        std::vector<int> all(kF);
        std::iota(all.begin(), all.end(), 0);
        if (rng == nullptr || m >= kF) return all;
        for (int k = 0; k < m; ++k) {
            const auto j = k + static_cast<int>(rng->below(kF - k));
            std::swap(all[k], all[j]);
        }
        all.resize(m);
        std::sort(all.begin(), all.end());
        return all;
    }
};

void check_tree_options(const TreeOptions& opt) {
    if (opt.max_depth < 0) throw ConfigError("tree_fit: max depth must be nonnegative");
    if (opt.min_leaf < 1) throw ConfigError("tree_fit: min leaf must be at least 1");
}

} // namespace

TreeModel tree_fit(std::span<const Features> x, std::span<const Targets> y,
                   const TreeOptions& opt) {
    check_table(x, y, "tree_fit");
    check_tree_options(opt);

    TreeBuilder builder{x, y, opt, nullptr, kF, {}};
    std::vector<int> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    builder.build(idx, 0);

    TreeModel model;
    model.nodes = std::move(builder.nodes);
    return model;
}

Targets ForestModel::predict(const Features& x) const {
    Targets out{};
    for (const TreeModel& tree : trees) {
        const Targets p = tree.predict(x);
        for (int k = 0; k < kO; ++k) out[k] += p[k];
    }
    for (int k = 0; k < kO; ++k) out[k] /= static_cast<double>(trees.size());
    return out;
}

ForestModel forest_fit(std::span<const Features> x, std::span<const Targets> y,
                       const ForestOptions& opt) {
    check_table(x, y, "forest_fit");
    check_tree_options({opt.max_depth, opt.min_leaf});
    if (opt.n_trees < 1) throw ConfigError("forest_fit: need at least one tree");
    if (opt.m_features < 1 || opt.m_features > kF)
        throw ConfigError("forest_fit: feature subsample must be in [1, 12]");

    ForestModel model;
    model.options = opt;
    model.trees.reserve(opt.n_trees);
    for (int t = 0; t < opt.n_trees; ++t) {
        Rng rng(Rng::mix(opt.seed, t));
        std::vector<int> idx(x.size());
        if (opt.bootstrap) {
            for (int& i : idx) i = static_cast<int>(rng.below(x.size()));
        } else {
            std::iota(idx.begin(), idx.end(), 0);
        }
        TreeBuilder builder{x, y, {opt.max_depth, opt.min_leaf}, &rng, opt.m_features, {}};
        builder.build(idx, 0);
        TreeModel tree;
        tree.nodes = std::move(builder.nodes);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

nlohmann::json to_json(const LinearModel& model) {
    nlohmann::json weights = nlohmann::json::array();
    for (const Targets& w : model.weights) weights.push_back(w);
    return {{"weights", weights}, {"intercept", model.intercept}, {"jitter", model.jitter}};
}

LinearModel linear_from_json(const nlohmann::json& j) {
    LinearModel model;
    const auto& weights = j.at("weights");
    if (weights.size() != static_cast<std::size_t>(kF))
        throw FormatError("linear model json: expected 12 weight rows");
    for (int f = 0; f < kF; ++f) model.weights[f] = weights[f].get<Targets>();
    model.intercept = j.at("intercept").get<Targets>();
    model.jitter = j.at("jitter").get<double>();
    return model;
}

nlohmann::json to_json(const TreeModel& model) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& n : model.nodes) {
        if (n.feature < 0)
            nodes.push_back({{"value", n.value}});
        else
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"left", n.left},
                             {"right", n.right}});
    }
    return {{"nodes", nodes}};
}

TreeModel tree_from_json(const nlohmann::json& j) {
    TreeModel model;
    for (const auto& n : j.at("nodes")) {
        TreeNode node;
        if (n.contains("feature")) {
            node.feature = n.at("feature").get<int>();
            node.threshold = n.at("threshold").get<double>();
            node.left = n.at("left").get<int>();
            node.right = n.at("right").get<int>();
            if (node.feature < 0 || node.feature >= kF)
                throw FormatError("tree json: feature index out of range");
        } else {
            node.value = n.at("value").get<Targets>();
        }
        model.nodes.push_back(node);
    }
    if (model.nodes.empty()) throw FormatError("tree json: no nodes");
    for (const TreeNode& n : model.nodes) {
        if (n.feature < 0) continue;
        const auto size = static_cast<int>(model.nodes.size());
        if (n.left < 0 || n.left >= size || n.right < 0 || n.right >= size)
            throw FormatError("tree json: child index out of range");
    }
    return model;
}

nlohmann::json to_json(const ForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const TreeModel& t : model.trees) trees.push_back(to_json(t));
    return {{"options",
             {{"n_trees", model.options.n_trees},
              {"max_depth", model.options.max_depth},
              {"min_leaf", model.options.min_leaf},
              {"m_features", model.options.m_features},
              {"bootstrap", model.options.bootstrap},
              {"seed", model.options.seed}}},
            {"trees", trees}};
}

ForestModel forest_from_json(const nlohmann::json& j) {
    ForestModel model;
    const auto& opt = j.at("options");
    model.options.n_trees = opt.at("n_trees").get<int>();
    model.options.max_depth = opt.at("max_depth").get<int>();
    model.options.min_leaf = opt.at("min_leaf").get<int>();
    model.options.m_features = opt.at("m_features").get<int>();
    model.options.bootstrap = opt.at("bootstrap").get<bool>();
    model.options.seed = opt.at("seed").get<std::uint64_t>();
    for (const auto& t : j.at("trees")) model.trees.push_back(tree_from_json(t));
    if (model.trees.empty()) throw FormatError("forest json: no trees");
    return model;
}

} // namespace flotapinn::baselines
