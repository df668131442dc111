#include "flotapinn/train.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>
#include <utility>

#include "flotapinn/errors.hpp"
#include "flotapinn/preprocess.hpp"
#include "flotapinn/rng.hpp"

namespace flotapinn::train {

namespace {

// RNG stream tags, disjoint from the simulator's (100/1000/2000 blocks).
constexpr std::uint64_t kStreamUInit = 5000;
constexpr std::uint64_t kStreamRInit = 5001;
constexpr std::uint64_t kStreamShuffle = 5002;
constexpr std::uint64_t kStreamForest = 5003;

constexpr std::array<ModelKind, kNumModelKinds> kRowOrder{
    ModelKind::kLinreg,           ModelKind::kForest,
    ModelKind::kTree,             ModelKind::kDataDriven,
    ModelKind::kPinnBidirectional, ModelKind::kPinnUnidirectional,
    ModelKind::kPinnMassBalance,
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

std::string_view model_kind_name(ModelKind kind) {
    switch (kind) {
    case ModelKind::kLinreg: return "linreg";
    case ModelKind::kForest: return "forest";
    case ModelKind::kTree: return "tree";
    case ModelKind::kDataDriven: return "datadriven";
    case ModelKind::kPinnBidirectional: return "pinn-bidirectional";
    case ModelKind::kPinnUnidirectional: return "pinn-unidirectional";
    case ModelKind::kPinnMassBalance: return "pinn-massbalance";
    }
    throw UsageError("model_kind_name: unknown kind");
}

ModelKind model_kind_from_name(std::string_view name) {
    for (ModelKind kind : kRowOrder)
        if (model_kind_name(kind) == name) return kind;
    throw ConfigError("train config: unknown model kind '" + std::string(name) + "'");
}

physics::ResidualKind residual_kind_of(ModelKind kind) {
    switch (kind) {
    case ModelKind::kDataDriven: return physics::ResidualKind::kNone;
    case ModelKind::kPinnBidirectional: return physics::ResidualKind::kBidirectional;
    case ModelKind::kPinnUnidirectional: return physics::ResidualKind::kUnidirectional;
    case ModelKind::kPinnMassBalance: return physics::ResidualKind::kMassBalance;
    default:
        throw UsageError("residual_kind_of: not a network kind");
    }
}

bool is_network_kind(ModelKind kind) {
    return kind == ModelKind::kDataDriven || kind == ModelKind::kPinnBidirectional ||
           kind == ModelKind::kPinnUnidirectional || kind == ModelKind::kPinnMassBalance;
}

int lambda_raw_count(ModelKind kind) {
    switch (kind) {
    case ModelKind::kPinnBidirectional: return 3; // volume, alpha_p, alpha_f
    case ModelKind::kPinnUnidirectional:
    case ModelKind::kPinnMassBalance: return 1; // volume
    default: return 0;
    }
}

void validate(const TrainConfig& config) {
    if (config.batch < 1) throw ConfigError("train config: batch must be at least 1");
    if (config.patience < 1) throw ConfigError("train config: patience must be at least 1");
    if (!(config.tolerance > 0.0)) throw ConfigError("train config: tolerance must be positive");
    if (config.max_steps < 1) throw ConfigError("train config: max_steps must be at least 1");
    if (!(config.lr >= 0.0) || !std::isfinite(config.lr))
        throw ConfigError("train config: lr must be finite and nonnegative");
    if (!is_network_kind(config.kind)) return;

    if (config.u_layers.size() < 2)
        throw ConfigError("train config: u_layers needs an input and an output layer");
    for (int w : config.u_layers)
        if (w <= 0) throw ConfigError("train config: u_layers must be positive");
    if (config.u_layers.front() != data::kNumInputs)
        throw ConfigError("train config: u-net input width must be 12");
    if (config.u_layers.back() != data::kNumTargets)
        throw ConfigError("train config: u-net output width must be 2");

    if (config.kind == ModelKind::kPinnUnidirectional) {
        if (config.r_layers.size() < 2)
            throw ConfigError("train config: r_layers needs an input and an output layer");
        for (int w : config.r_layers)
            if (w <= 0) throw ConfigError("train config: r_layers must be positive");
        if (config.r_layers.front() != data::kNumInputs + 1 + data::kNumTargets)
            throw ConfigError("train config: R-net input width must be 15 "
                              "(12 inputs + t + 2 network outputs)");
        if (config.r_layers.back() != 1)
            throw ConfigError("train config: R-net output width must be 1");
    }
}

nlohmann::json to_json(const TrainConfig& config) {
    return nlohmann::json{{"kind", model_kind_name(config.kind)},
                          {"u_layers", config.u_layers},
                          {"r_layers", config.r_layers},
                          {"lr", config.lr},
                          {"batch", config.batch},
                          {"patience", config.patience},
                          {"tolerance", config.tolerance},
                          {"max_steps", config.max_steps},
                          {"seed", config.seed},
                          {"train_path", config.train_path.string()},
                          {"val_path", config.val_path.string()},
                          {"test_path", config.test_path.string()}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig def;
    TrainConfig c;
    c.kind = model_kind_from_name(j.at("kind").get<std::string>());
    c.u_layers = j.value("u_layers", def.u_layers);
    c.r_layers = j.value("r_layers", def.r_layers);
    c.lr = j.value("lr", def.lr);
    c.batch = j.value("batch", def.batch);
    c.patience = j.value("patience", def.patience);
    c.tolerance = j.value("tolerance", def.tolerance);
    c.max_steps = j.value("max_steps", def.max_steps);
    c.seed = j.value("seed", def.seed);
    c.train_path = j.value("train_path", std::string());
    c.val_path = j.value("val_path", std::string());
    c.test_path = j.value("test_path", std::string());
    validate(c);
    return c;
}

// The desk learning rate is three decades above the published 1e-5: at a few
// thousand steps the small nets never leave initialization otherwise.
TrainConfig desk_preset() {
    TrainConfig c;
    c.u_layers = {12, 32, 64, 32, 2};
    c.r_layers = {15, 32, 1};
    c.lr = 1e-3;
    c.batch = 128;
    c.patience = 50;
    c.tolerance = 1e-5;
    c.max_steps = 12000;
    c.seed = 1;
    return c;
}

TrainConfig cell1_preset() {
    TrainConfig c;
    c.u_layers = {12, 256, 512, 256, 2};
    c.r_layers = {15, 100, 1};
    c.lr = 1e-5;
    c.batch = 128;
    c.patience = 20000;
    c.tolerance = 1e-5;
    c.max_steps = 1000000;
    c.seed = 1;
    return c;
}

TrainConfig cell2_preset() {
    TrainConfig c = cell1_preset();
    c.u_layers = {12, 128, 256, 128, 2};
    c.r_layers = {15, 400, 1};
    c.patience = 30000;
    return c;
}

EarlyStop::EarlyStop(int patience, double tolerance)
    : patience_(patience), tolerance_(tolerance) {
    if (patience < 1) throw ConfigError("early_stop: patience must be at least 1");
    if (!(tolerance > 0.0)) throw ConfigError("early_stop: tolerance must be positive");
}

bool EarlyStop::push(double loss) {
    const bool first = count_ == 0;
    ++count_;
    if (first || best_loss_ - loss > tolerance_) {
        best_loss_ = loss;
        best_index_ = count_ - 1;
        stagnant_ = 0;
        improved_last_ = true;
        return false;
    }
    improved_last_ = false;
    ++stagnant_;
    return stagnant_ >= patience_;
}

EarlyStopResult early_stop(std::span<const double> history, int patience, double tolerance) {
    if (history.empty()) throw UsageError("early_stop: history is empty");
    EarlyStop state(patience, tolerance);
    for (std::size_t i = 0; i < history.size(); ++i)
        if (state.push(history[i])) return {true, i + 1, state.best_index()};
    return {false, history.size(), state.best_index()};
}

InputConditioner InputConditioner::fit(const data::Dataset& ds) {
    if (ds.rows.empty()) throw DataError("conditioner: dataset is empty");
    InputConditioner c;
    const double n = static_cast<double>(ds.rows.size());
    const auto column_stats = [&](int col) -> std::pair<double, double> {
        double sum = 0.0;
        for (const auto& row : ds.rows) sum += row[col];
        const double mean = sum / n;
        double sq = 0.0;
        for (const auto& row : ds.rows) {
            const double d = row[col] - mean;
            sq += d * d;
        }
        const double sd = std::sqrt(sq / n);
        if (!std::isfinite(mean) || !std::isfinite(sd))
            throw DataError("conditioner: non-finite statistics in column " +
                            std::string(data::kColumnNames[col]));
        return {mean, sd > 0.0 ? sd : 1.0};
    };
    for (int j = 0; j < data::kNumInputs; ++j)
        std::tie(c.mean[j], c.scale[j]) = column_stats(j);
    for (int j = 0; j < data::kNumTargets; ++j)
        std::tie(c.y_mean[j], c.y_scale[j]) = column_stats(data::kNumInputs + j);
    return c;
}

std::array<double, data::kNumInputs> InputConditioner::apply(std::span<const double> input) const {
    if (input.size() != static_cast<std::size_t>(data::kNumInputs))
        throw UsageError("conditioner: input width must be 12");
    std::array<double, data::kNumInputs> out;
    for (int j = 0; j < data::kNumInputs; ++j)
        out[j] = (input[j] - mean[j]) * (1.0 / scale[j]);
    return out;
}

nlohmann::json to_json(const InputConditioner& c) {
    return nlohmann::json{{"mean", c.mean},
                          {"scale", c.scale},
                          {"y_mean", c.y_mean},
                          {"y_scale", c.y_scale}};
}

InputConditioner conditioner_from_json(const nlohmann::json& j) {
    InputConditioner c;
    const auto fill = [&j](const char* key, auto& arr) {
        const auto vec = j.at(key).get<std::vector<double>>();
        if (vec.size() != arr.size())
            throw FormatError("conditioner: '" + std::string(key) + "' has wrong length");
        std::copy(vec.begin(), vec.end(), arr.begin());
    };
    fill("mean", c.mean);
    fill("scale", c.scale);
    fill("y_mean", c.y_mean);
    fill("y_scale", c.y_scale);
    return c;
}

Metrics evaluate(const data::Dataset& ds, const PredictFn& predict) {
    if (!predict) throw UsageError("evaluate: predictor is empty");
    if (ds.rows.empty()) throw DataError("evaluate: dataset is empty");

    double se_p = 0.0, se_f = 0.0;
    double re_p = 0.0, re_f = 0.0;
    std::size_t n_p = 0, n_f = 0;
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        const auto in = ds.inputs(i);
        const auto pred = predict(in);
        const auto y = ds.targets(i);
        const double e_p = pred[0] - y[0];
        const double e_f = pred[1] - y[1];
        se_p += e_p * e_p;
        se_f += e_f * e_f;
        if (std::abs(y[0]) >= kMreExclusionFloor) {
            re_p += std::abs(e_p) / std::abs(y[0]);
            ++n_p;
        }
        if (std::abs(y[1]) >= kMreExclusionFloor) {
            re_f += std::abs(e_f) / std::abs(y[1]);
            ++n_f;
        }
    }
    const double n = static_cast<double>(ds.rows.size());
    if (n_p == 0)
        throw EvalError("evaluate: every C_p sample excluded from the MRE (|actual| < 1e-9)");
    if (n_f == 0)
        throw EvalError("evaluate: every C_f sample excluded from the MRE (|actual| < 1e-9)");

    Metrics m;
    m.c_p = {se_p / n, re_p / static_cast<double>(n_p), ds.rows.size() - n_p};
    m.c_f = {se_f / n, re_f / static_cast<double>(n_f), ds.rows.size() - n_f};
    m.mse_total = (se_p + se_f) / n;
    return m;
}

nlohmann::json to_json(const Metrics& m) {
    const auto output = [](const OutputMetrics& o) {
        return nlohmann::json{{"mse", o.mse}, {"mre", o.mre}, {"mre_excluded", o.mre_excluded}};
    };
    return nlohmann::json{{"c_p", output(m.c_p)}, {"c_f", output(m.c_f)},
                          {"mse_total", m.mse_total}};
}

namespace {

PredictFn nn_predictor(nn::MlpModel u, InputConditioner cond) {
    return [u = std::move(u), cond](std::span<const double> in) {
        const auto c = cond.apply(in);
        const auto out = nn::mlp_forward_value(u, c);
        return std::array<double, 2>{out[0], out[1]};
    };
}

template <typename Model>
PredictFn table_predictor(Model model) {
    return [model = std::move(model)](std::span<const double> in) {
        baselines::Features f;
        std::copy(in.begin(), in.end(), f.begin());
        return model.predict(f);
    };
}

} // namespace

PredictFn predictor(const Checkpoint& ckpt) {
    return std::visit(
        [](const auto& model) -> PredictFn {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, NnState>)
                return nn_predictor(model.u, model.conditioner);
            else
                return table_predictor(model);
        },
        ckpt.model);
}

nlohmann::json to_json(const Checkpoint& ckpt) {
    nlohmann::json model = std::visit(
        [](const auto& m) -> nlohmann::json {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, NnState>) {
                nlohmann::json j{{"u", nn::to_json(m.u)},
                                 {"lambda_raws", m.lambda_raws},
                                 {"conditioner", to_json(m.conditioner)}};
                j["r"] = m.r.layer_sizes.empty() ? nlohmann::json() : nn::to_json(m.r);
                return j;
            } else {
                return baselines::to_json(m);
            }
        },
        ckpt.model);
    return nlohmann::json{{"kind", model_kind_name(ckpt.kind)}, {"model", std::move(model)}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    Checkpoint ckpt;
    ckpt.kind = model_kind_from_name(j.at("kind").get<std::string>());
    const nlohmann::json& m = j.at("model");
    switch (ckpt.kind) {
    case ModelKind::kLinreg: ckpt.model = baselines::linear_from_json(m); break;
    case ModelKind::kForest: ckpt.model = baselines::forest_from_json(m); break;
    case ModelKind::kTree: ckpt.model = baselines::tree_from_json(m); break;
    default: {
        NnState state;
        state.u = nn::mlp_from_json(m.at("u"));
        state.lambda_raws = m.at("lambda_raws").get<std::vector<double>>();
        state.conditioner = conditioner_from_json(m.at("conditioner"));
        if (!m.at("r").is_null()) state.r = nn::mlp_from_json(m.at("r"));
        if (state.lambda_raws.size() !=
            static_cast<std::size_t>(lambda_raw_count(ckpt.kind)))
            throw FormatError("checkpoint: lambda_raws arity does not match the model kind");
        ckpt.model = std::move(state);
    }
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("checkpoint: cannot open '" + path.string() + "' for writing");
    out << to_json(ckpt).dump(2) << '\n';
    if (!out) throw FormatError("checkpoint: failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("checkpoint: cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint: '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return checkpoint_from_json(j);
}

nlohmann::json to_json(const RunReport& report) {
    nlohmann::json lambda;
    if (report.has_lambda) {
        lambda = nlohmann::json{{"v_p", report.lambda.v_p}, {"v_f", report.lambda.v_f}};
        if (report.config.kind == ModelKind::kPinnBidirectional) {
            lambda["alpha_p"] = report.lambda.alpha_p;
            lambda["alpha_f"] = report.lambda.alpha_f;
        }
    }
    return nlohmann::json{{"config", to_json(report.config)},
                          {"train_history", report.train_history},
                          {"val_history", report.val_history},
                          {"best_epoch", report.best_epoch},
                          {"best_step", report.best_step},
                          {"best_val_mse", report.best_val_mse},
                          {"total_steps", report.total_steps},
                          {"stopped_early", report.stopped_early},
                          {"val", to_json(report.val)},
                          {"test", to_json(report.test)},
                          {"lambda", std::move(lambda)},
                          {"selected_options", report.selected_options}};
}

namespace {

std::size_t forward_node_count(std::span<const int> layers) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        n += static_cast<std::size_t>(layers[l]) * layers[l + 1];
        if (l + 2 < layers.size()) n += layers[l + 1];
    }
    return n;
}

struct FlatLayout {
    std::size_t u_count = 0;
    std::size_t lambda_count = 0;
    std::size_t r_count = 0;

    std::size_t lambda_off() const { return u_count; }
    std::size_t r_off() const { return u_count + lambda_count; }
    std::size_t total() const { return u_count + lambda_count + r_count; }
};

TrainResult train_network(const TrainConfig& cfg, const data::Dataset& train_ds,
                          const data::Dataset& val_ds, const StepCallback& on_step) {
    const physics::ResidualKind res_kind = residual_kind_of(cfg.kind);
    const bool uses_r = cfg.kind == ModelKind::kPinnUnidirectional;
    const InputConditioner cond = InputConditioner::fit(train_ds);

    nn::MlpModel u = nn::mlp_init(cfg.u_layers, Rng::mix(cfg.seed, kStreamUInit));
    // Output biases start at the training target means so early steps fit
    // structure instead of ramping the output offset up from zero.
    u.params[u.params.size() - 2] = cond.y_mean[0];
    u.params[u.params.size() - 1] = cond.y_mean[1];

    FlatLayout layout;
    layout.u_count = u.params.size();
    layout.lambda_count = static_cast<std::size_t>(lambda_raw_count(cfg.kind));
    nn::MlpModel r;
    if (uses_r) {
        r = nn::mlp_init(cfg.r_layers, Rng::mix(cfg.seed, kStreamRInit));
        layout.r_count = r.params.size();
    }

    std::vector<double> params;
    params.reserve(layout.total());
    params.insert(params.end(), u.params.begin(), u.params.end());
    if (layout.lambda_count > 0) {
        params.push_back(0.0); // volume raw: froth fraction starts mid-box
        if (cfg.kind == ModelKind::kPinnBidirectional) {
            const double alpha0 = nn::softplus_inverse(0.005);
            params.push_back(alpha0);
            params.push_back(alpha0);
        }
    }
    if (uses_r) params.insert(params.end(), r.params.begin(), r.params.end());

    nn::AdamState adam(params.size(), cfg.lr);
    Rng shuffle_rng(Rng::mix(cfg.seed, kStreamShuffle));
    EarlyStop stopper(cfg.patience, cfg.tolerance);

    const std::size_t n = train_ds.rows.size();
    const std::size_t batch = static_cast<std::size_t>(cfg.batch);
    std::vector<std::size_t> order(n);

    std::size_t per_sample = 26 + forward_node_count(cfg.u_layers) + 64;
    if (uses_r) per_sample += forward_node_count(cfg.r_layers) + 8;
    ad::Tape tape(layout.total() + 16 + std::min(batch, n) * per_sample);

    std::vector<ad::Var> leaves(params.size());
    std::vector<physics::BatchTerm> terms;
    terms.reserve(std::min(batch, n));

    std::vector<double> train_hist, val_hist;
    std::vector<double> best_params = params;
    std::size_t best_epoch = 0;
    std::int64_t best_step = 0;
    double best_val = 0.0;
    std::int64_t step_count = 0;
    bool stopped_early = false;
    nn::MlpModel u_view{cfg.u_layers, {}};

    for (std::size_t epoch = 0;; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(order, shuffle_rng);

        double loss_sum = 0.0;
        std::size_t batches = 0;
        bool out_of_steps = false;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t end = std::min(n, start + batch);
            const std::span<const std::size_t> idx(order.data() + start, end - start);

            tape.clear();
            for (std::size_t i = 0; i < params.size(); ++i) leaves[i] = tape.lift(params[i]);
            const std::span<const ad::Var> u_leaves(leaves.data(), layout.u_count);
            const std::span<const ad::Var> r_leaves(leaves.data() + layout.r_off(),
                                                    layout.r_count);

            physics::LambdaSet lam;
            if (res_kind == physics::ResidualKind::kBidirectional)
                lam = physics::decode_lambda(tape, res_kind, leaves[layout.lambda_off()],
                                             leaves[layout.lambda_off() + 1],
                                             leaves[layout.lambda_off() + 2]);
            else if (res_kind != physics::ResidualKind::kNone)
                lam = physics::decode_lambda(tape, res_kind, leaves[layout.lambda_off()]);

            terms.clear();
            for (const std::size_t i : idx) {
                const data::Row& row = train_ds.rows[i];
                std::array<ad::Var, data::kNumInputs> cx;
                for (int j = 0; j < data::kNumInputs; ++j) {
                    const ad::Var x = tape.lift(row[j], j == data::kT ? 1.0 : 0.0);
                    cx[j] = tape.scale(tape.shift(x, -cond.mean[j]), 1.0 / cond.scale[j]);
                }
                const auto uv = nn::mlp_forward(tape, cfg.u_layers, u_leaves, cx);
                const auto st = physics::StateOutputs::from_network(tape, uv);

                physics::BatchTerm term;
                term.u_c_p = uv[0];
                term.u_c_f = uv[1];
                term.y_c_p = row[data::kCPTail];
                term.y_c_f = row[data::kCFConc];
                switch (res_kind) {
                case physics::ResidualKind::kNone: break;
                case physics::ResidualKind::kBidirectional: {
                    const auto [f0, f1] = physics::residual_bidirectional(
                        tape, physics::ExogenousInputs::from_row(row), st, lam);
                    term.f0 = f0;
                    term.f1 = f1;
                    term.n_residuals = 2;
                } break;
                case physics::ResidualKind::kUnidirectional: {
                    std::array<ad::Var, 15> rin;
                    rin[0] = cx[data::kT];
                    for (int j = 0; j < data::kNumInputs; ++j) rin[1 + j] = cx[j];
                    rin[13] = tape.scale(tape.shift(uv[0], -cond.y_mean[0]),
                                         1.0 / cond.y_scale[0]);
                    rin[14] = tape.scale(tape.shift(uv[1], -cond.y_mean[1]),
                                         1.0 / cond.y_scale[1]);
                    const auto rv = nn::mlp_forward(tape, cfg.r_layers, r_leaves, rin);
                    const ad::Var recovery = tape.softplus(rv[0]);
                    const auto [f0, f1] = physics::residual_unidirectional(
                        tape, physics::ExogenousInputs::from_row(row), st, lam, recovery);
                    term.f0 = f0;
                    term.f1 = f1;
                    term.n_residuals = 2;
                } break;
                case physics::ResidualKind::kMassBalance:
                    term.f0 = physics::residual_mass_balance(
                        tape, physics::ExogenousInputs::from_row(row), st, lam);
                    term.n_residuals = 1;
                    break;
                }
                terms.push_back(term);
            }

            const ad::Var loss = physics::pinn_loss(tape, terms, res_kind);
            ++step_count;

            double data_sum = 0.0, res_sum = 0.0;
            for (const auto& t : terms) {
                const double e_p = t.u_c_p.value() - t.y_c_p;
                const double e_f = t.u_c_f.value() - t.y_c_f;
                data_sum += e_p * e_p + e_f * e_f;
                if (t.n_residuals >= 1) res_sum += t.f0.value() * t.f0.value();
                if (t.n_residuals >= 2) res_sum += t.f1.value() * t.f1.value();
            }
            const double data_term = data_sum / static_cast<double>(terms.size());
            const double residual_term = res_sum / static_cast<double>(terms.size());

            if (!std::isfinite(loss.value())) {
                const bool bad_data = !std::isfinite(data_term);
                const bool bad_res = !std::isfinite(residual_term);
                const char* which = bad_data ? (bad_res ? "data and residual terms" : "data term")
                                             : (bad_res ? "residual term" : "loss");
                throw TrainError("train_model: non-finite loss at step " +
                                 std::to_string(step_count) + " (" + which + ")");
            }

            if (on_step)
                on_step(StepInfo{step_count, epoch, loss.value(), data_term, residual_term, idx,
                                 params});

            tape.backward(loss);
            const std::vector<double> grads = tape.gradient(leaves);
            nn::adam_step(adam, params, grads);

            loss_sum += loss.value();
            ++batches;
            if (step_count >= cfg.max_steps) {
                out_of_steps = true;
                break;
            }
        }
        train_hist.push_back(loss_sum / static_cast<double>(batches));

        u_view.params.assign(params.begin(), params.begin() + layout.u_count);
        const double val_mse = evaluate(val_ds, nn_predictor(u_view, cond)).mse_total;
        if (!std::isfinite(val_mse))
            throw TrainError("train_model: non-finite validation MSE at epoch " +
                             std::to_string(epoch));
        val_hist.push_back(val_mse);

        const bool stop = stopper.push(val_mse);
        if (stopper.improved_last()) {
            best_params = params;
            best_epoch = epoch;
            best_step = step_count;
            best_val = val_mse;
        }
        if (stop) {
            stopped_early = true;
            break;
        }
        if (out_of_steps) break;
    }

    TrainResult result;
    result.checkpoint.kind = cfg.kind;
    NnState state;
    state.u.layer_sizes = cfg.u_layers;
    state.u.params.assign(best_params.begin(), best_params.begin() + layout.u_count);
    state.lambda_raws.assign(best_params.begin() + layout.lambda_off(),
                             best_params.begin() + layout.lambda_off() + layout.lambda_count);
    if (uses_r) {
        state.r.layer_sizes = cfg.r_layers;
        state.r.params.assign(best_params.begin() + layout.r_off(), best_params.end());
    }
    state.conditioner = cond;

    RunReport& report = result.report;
    report.train_history = std::move(train_hist);
    report.val_history = std::move(val_hist);
    report.best_epoch = best_epoch;
    report.best_step = best_step;
    report.best_val_mse = best_val;
    report.total_steps = step_count;
    report.stopped_early = stopped_early;
    if (layout.lambda_count > 0) {
        report.has_lambda = true;
        // The reported physics estimate is the last optimizer state, not the
        // best-validation snapshot: lambda keeps converging long after the
        // prediction MSE bottoms out, and the checkpoint already preserves
        // the best-val raws for inference.
        const double vol_raw = params[layout.lambda_off()];
        if (cfg.kind == ModelKind::kPinnBidirectional) {
            report.lambda = physics::decode_lambda_values(vol_raw, params[layout.lambda_off() + 1],
                                                          params[layout.lambda_off() + 2]);
        } else {
            const nn::VolumePair vol = nn::constrained_volumes(vol_raw);
            report.lambda.v_f = vol.v_f;
            report.lambda.v_p = vol.v_p;
        }
    }

    result.checkpoint.model = std::move(state);
    return result;
}

TrainResult fit_baseline(const TrainConfig& cfg, const data::Dataset& train_ds,
                         const data::Dataset& val_ds) {
    const baselines::TableView table = baselines::split_xy(train_ds);

    TrainResult result;
    result.checkpoint.kind = cfg.kind;
    double best_val = 0.0;
    std::string selected;

    switch (cfg.kind) {
    case ModelKind::kLinreg: {
        baselines::LinearModel model = baselines::linreg_fit(table.x, table.y);
        best_val = evaluate(val_ds, table_predictor(model)).mse_total;
        result.checkpoint.model = std::move(model);
    } break;
    case ModelKind::kTree: {
        baselines::TreeModel best;
        bool have = false;
        for (const int depth : kTreeDepthGrid) {
            baselines::TreeOptions opt;
            opt.max_depth = depth;
            opt.min_leaf = 1;
            baselines::TreeModel model = baselines::tree_fit(table.x, table.y, opt);
            const double val = evaluate(val_ds, table_predictor(model)).mse_total;
            if (!have || val < best_val) {
                best = std::move(model);
                best_val = val;
                selected = "max_depth=" + std::to_string(depth);
                have = true;
            }
        }
        result.checkpoint.model = std::move(best);
    } break;
    case ModelKind::kForest: {
        baselines::ForestModel best;
        bool have = false;
        for (const int depth : kTreeDepthGrid)
            for (const int trees : kForestTreesGrid)
                for (const int m : kForestFeaturesGrid) {
                    baselines::ForestOptions opt;
                    opt.max_depth = depth;
                    opt.n_trees = trees;
                    opt.m_features = m;
                    opt.min_leaf = 1;
                    opt.bootstrap = true;
                    opt.seed = Rng::mix(cfg.seed, kStreamForest);
                    baselines::ForestModel model = baselines::forest_fit(table.x, table.y, opt);
                    const double val = evaluate(val_ds, table_predictor(model)).mse_total;
                    if (!have || val < best_val) {
                        best = std::move(model);
                        best_val = val;
                        selected = "max_depth=" + std::to_string(depth) +
                                   " n_trees=" + std::to_string(trees) +
                                   " m_features=" + std::to_string(m);
                        have = true;
                    }
                }
        result.checkpoint.model = std::move(best);
    } break;
    default:
        throw UsageError("fit_baseline: not a baseline kind");
    }

    result.report.val_history = {best_val};
    result.report.best_val_mse = best_val;
    result.report.selected_options = std::move(selected);
    return result;
}

} // namespace

TrainResult train_model(const TrainConfig& config, const StepCallback& on_step) {
    validate(config);
    const auto t0 = std::chrono::steady_clock::now();

    const data::Dataset train_ds = data::import_csv(config.train_path);
    const data::Dataset val_ds = data::import_csv(config.val_path);
    const data::Dataset test_ds = data::import_csv(config.test_path);
    if (train_ds.rows.empty()) throw DataError("train_model: training dataset is empty");
    if (val_ds.rows.empty()) throw DataError("train_model: validation dataset is empty");
    if (test_ds.rows.empty()) throw DataError("train_model: test dataset is empty");

    TrainResult result = is_network_kind(config.kind)
                             ? train_network(config, train_ds, val_ds, on_step)
                             : fit_baseline(config, train_ds, val_ds);

    const PredictFn fn = predictor(result.checkpoint);
    result.report.config = config;
    result.report.val = evaluate(val_ds, fn);
    result.report.test = evaluate(test_ds, fn);
    result.report.wall_seconds = seconds_since(t0);
    return result;
}

void write_trace_csv(const data::Dataset& ds, const PredictFn& predict,
                     const std::filesystem::path& path) {
    if (!predict) throw UsageError("trace: predictor is empty");
    if (ds.rows.empty()) throw DataError("trace: dataset is empty");

    const std::size_t n = ds.rows.size();
    std::vector<double> actual_p(n), actual_f(n), pred_p(n), pred_f(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto out = predict(ds.inputs(i));
        const auto y = ds.targets(i);
        actual_p[i] = y[0];
        actual_f[i] = y[1];
        pred_p[i] = out[0];
        pred_f[i] = out[1];
    }
    const preprocess::ScaledColumn s_p = preprocess::minmax_scale(actual_p);
    const preprocess::ScaledColumn s_f = preprocess::minmax_scale(actual_f);

    std::ofstream out(path);
    if (!out) throw FormatError("trace: cannot open '" + path.string() + "' for writing");
    out << "t,c_p_actual,c_p_pred,c_f_actual,c_f_pred\n";
    for (std::size_t i = 0; i < n; ++i) {
        out << data::format_double(ds.rows[i][data::kT]) << ','
            << data::format_double(s_p.values[i]) << ','
            << data::format_double((pred_p[i] - s_p.min) / (s_p.max - s_p.min)) << ','
            << data::format_double(s_f.values[i]) << ','
            << data::format_double((pred_f[i] - s_f.min) / (s_f.max - s_f.min)) << '\n';
    }
    if (!out) throw FormatError("trace: failed writing '" + path.string() + "'");
}

BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
    for (const ModelKind kind : kRowOrder) {
        TrainConfig c = config.base;
        c.kind = kind;
        validate(c);
    }
    if (!config.out_dir.empty()) std::filesystem::create_directories(config.out_dir);

    struct RowWork {
        BenchmarkRow row;
        PredictFn fn;
    };
    std::vector<RowWork> work(kNumModelKinds);

    const auto run_one = [&config, &work](int k) {
        BenchmarkRow& row = work[k].row;
        row.kind = kRowOrder[k];
        const auto t0 = std::chrono::steady_clock::now();
        try {
            TrainConfig c = config.base;
            c.kind = kRowOrder[k];
            TrainResult res = train_model(c);
            row.val = res.report.val;
            row.test = res.report.test;
            row.selected_options = res.report.selected_options;
            row.has_lambda = res.report.has_lambda;
            row.lambda = res.report.lambda;
            work[k].fn = predictor(res.checkpoint);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        row.wall_seconds = seconds_since(t0);
    };

    const int threads = std::clamp(config.threads, 1, 64);
    if (threads <= 1) {
        for (int k = 0; k < kNumModelKinds; ++k) run_one(k);
    } else {
        for (int base = 0; base < kNumModelKinds; base += threads) {
            std::vector<std::thread> pool;
            for (int k = base; k < std::min(kNumModelKinds, base + threads); ++k)
                pool.emplace_back(run_one, k);
            for (std::thread& t : pool) t.join();
        }
    }

    BenchmarkResult result;
    result.rows.reserve(kNumModelKinds);
    for (const RowWork& w : work) result.rows.push_back(w.row);

    if (!config.out_dir.empty()) {
        const data::Dataset test_ds = data::import_csv(config.base.test_path);
        for (const RowWork& w : work) {
            if (w.row.failed) continue;
            const std::string name = "trace-" + std::string(model_kind_name(w.row.kind)) + ".csv";
            write_trace_csv(test_ds, w.fn, config.out_dir / name);
        }
        write_benchmark_csv(result, config.out_dir / "benchmark.csv");
        std::ofstream json_out(config.out_dir / "benchmark.json");
        json_out << to_json(result).dump(2) << '\n';
        // Wall-clock goes to its own file: the CSV/JSON artifacts must be
        // byte-identical across reruns.
        std::ofstream timings(config.out_dir / "timings.log");
        for (const RowWork& w : work)
            timings << model_kind_name(w.row.kind) << ' ' << w.row.wall_seconds << "s\n";
    }
    return result;
}

void write_benchmark_csv(const BenchmarkResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("benchmark: cannot open '" + path.string() + "' for writing");
    out << "model,val_mse,val_mre,test_mse,test_mre,"
           "val_mse_c_p,val_mre_c_p,test_mse_c_p,test_mre_c_p,status\n";
    for (const BenchmarkRow& row : result.rows) {
        out << model_kind_name(row.kind) << ',';
        if (row.failed) {
            out << ",,,,,,,,failed\n";
            continue;
        }
        out << data::format_double(row.val.c_f.mse) << ','
            << data::format_double(row.val.c_f.mre) << ','
            << data::format_double(row.test.c_f.mse) << ','
            << data::format_double(row.test.c_f.mre) << ','
            << data::format_double(row.val.c_p.mse) << ','
            << data::format_double(row.val.c_p.mre) << ','
            << data::format_double(row.test.c_p.mse) << ','
            << data::format_double(row.test.c_p.mre) << ",ok\n";
    }
    if (!out) throw FormatError("benchmark: failed writing '" + path.string() + "'");
}

nlohmann::json to_json(const BenchmarkResult& result) {
    nlohmann::json rows = nlohmann::json::array();
    for (const BenchmarkRow& row : result.rows) {
        nlohmann::json j{{"model", model_kind_name(row.kind)}, {"failed", row.failed}};
        if (row.failed) {
            j["error"] = row.error;
        } else {
            j["val"] = to_json(row.val);
            j["test"] = to_json(row.test);
            if (!row.selected_options.empty()) j["selected_options"] = row.selected_options;
            if (row.has_lambda) {
                nlohmann::json lambda{{"v_p", row.lambda.v_p}, {"v_f", row.lambda.v_f}};
                if (row.kind == ModelKind::kPinnBidirectional) {
                    lambda["alpha_p"] = row.lambda.alpha_p;
                    lambda["alpha_f"] = row.lambda.alpha_f;
                }
                j["lambda"] = std::move(lambda);
            }
        }
        rows.push_back(std::move(j));
    }
    return nlohmann::json{{"rows", std::move(rows)}};
}

int thread_cap_from_env() {
    const char* env = std::getenv("FLOTAPINN_THREADS");
    if (env == nullptr || *env == '\0') return 1;
    int v = 0;
    const char* end = env + std::strlen(env);
    const auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec != std::errc() || ptr != end) return 1;
    return std::clamp(v, 1, 64);
}

} // namespace flotapinn::train
