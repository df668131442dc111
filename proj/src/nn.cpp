#include "flotapinn/nn.hpp"

#include <cmath>
#include <string>

#include "flotapinn/errors.hpp"
#include "flotapinn/rng.hpp"

namespace flotapinn::nn {

std::size_t mlp_param_count(std::span<const int> layer_sizes) {
    if (layer_sizes.size() < 2)
        throw UsageError("mlp: need at least an input and an output layer");
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        if (layer_sizes[l] <= 0 || layer_sizes[l + 1] <= 0)
            throw UsageError("mlp: layer sizes must be positive");
        count += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1]
               + static_cast<std::size_t>(layer_sizes[l + 1]);
    }
    return count;
}

MlpModel mlp_init(std::vector<int> layer_sizes, std::uint64_t seed) {
    MlpModel model;
    model.params.reserve(mlp_param_count(layer_sizes));
    model.layer_sizes = std::move(layer_sizes);

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        const int n_in = model.layer_sizes[l];
        const int n_out = model.layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / (n_in + n_out));
        for (int i = 0; i < n_in * n_out; ++i)
            model.params.push_back(rng.uniform(-bound, bound));
        for (int i = 0; i < n_out; ++i)
            model.params.push_back(0.0);
    }
    return model;
}

std::vector<ad::Var> mlp_forward(ad::Tape& tape, std::span<const int> layer_sizes,
                                 std::span<const ad::Var> params,
                                 std::span<const ad::Var> input) {
    if (params.size() != mlp_param_count(layer_sizes))
        throw UsageError("mlp: parameter span does not match the layer sizes");
    if (input.size() != static_cast<std::size_t>(layer_sizes.front()))
        throw UsageError("mlp: input width does not match the first layer");

    std::vector<ad::Var> cur(input.begin(), input.end());
    std::vector<ad::Var> next;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int n_in = layer_sizes[l];
        const int n_out = layer_sizes[l + 1];
        const bool hidden = l + 2 < layer_sizes.size();
        const std::size_t bias_off = off + static_cast<std::size_t>(n_in) * n_out;

        next.clear();
        next.reserve(n_out);
        for (int j = 0; j < n_out; ++j) {
            ad::Var acc = params[bias_off + j];
            const std::size_t row = off + static_cast<std::size_t>(j) * n_in;
            for (int i = 0; i < n_in; ++i)
                acc = tape.mul_add(params[row + i], cur[i], acc);
            next.push_back(hidden ? tape.tanh(acc) : acc);
        }
        cur.swap(next);
        off = bias_off + n_out;
    }
    return cur;
}

std::vector<double> mlp_forward_value(const MlpModel& model, std::span<const double> input) {
    if (input.size() != static_cast<std::size_t>(model.input_size()))
        throw UsageError("mlp: input width does not match the first layer");

    std::vector<double> cur(input.begin(), input.end());
    std::vector<double> next;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        const int n_in = model.layer_sizes[l];
        const int n_out = model.layer_sizes[l + 1];
        const bool hidden = l + 2 < model.layer_sizes.size();
        const std::size_t bias_off = off + static_cast<std::size_t>(n_in) * n_out;

        next.assign(n_out, 0.0);
        for (int j = 0; j < n_out; ++j) {
            double acc = model.params[bias_off + j];
            const std::size_t row = off + static_cast<std::size_t>(j) * n_in;
            for (int i = 0; i < n_in; ++i)
                acc = model.params[row + i] * cur[i] + acc;
            next[j] = hidden ? std::tanh(acc) : acc;
        }
        cur.swap(next);
        off = bias_off + n_out;
    }
    return cur;
}

std::vector<Dual> mlp_forward_dual(const MlpModel& model, std::span<const Dual> input) {
    if (input.size() != static_cast<std::size_t>(model.input_size()))
        throw UsageError("mlp: input width does not match the first layer");

    std::vector<Dual> cur(input.begin(), input.end());
    std::vector<Dual> next;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
        const int n_in = model.layer_sizes[l];
        const int n_out = model.layer_sizes[l + 1];
        const bool hidden = l + 2 < model.layer_sizes.size();
        const std::size_t bias_off = off + static_cast<std::size_t>(n_in) * n_out;

        next.assign(n_out, Dual{});
        for (int j = 0; j < n_out; ++j) {
            Dual acc{model.params[bias_off + j], 0.0};
            const std::size_t row = off + static_cast<std::size_t>(j) * n_in;
            for (int i = 0; i < n_in; ++i) {
                const double w = model.params[row + i];
                acc.v = w * cur[i].v + acc.v;
                acc.t = w * cur[i].t + acc.t;
            }
            if (hidden) {
                const double y = std::tanh(acc.v);
                acc = Dual{y, (1.0 - y * y) * acc.t};
            }
            next[j] = acc;
        }
        cur.swap(next);
        off = bias_off + n_out;
    }
    return cur;
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw UsageError("adam: parameter, gradient, and state sizes disagree");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        if (!std::isfinite(g))
            throw TrainError("adam: non-finite gradient at parameter index " + std::to_string(i));
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

namespace {
constexpr double kFrothFracRange = kFrothFracHi - kFrothFracLo;
}

double sigmoid(double x) { return 0.5 + 0.5 * std::tanh(0.5 * x); }

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
    if (y <= 0.0)
        throw UsageError("softplus_inverse: target must be positive");
    // log(e^y - 1), stable for small y via expm1.
    return y > 30.0 ? y : std::log(std::expm1(y));
}

// V_p lies within a factor two of the total, so the final subtraction is
// exact (Sterbenz) and v_f + v_p == kTotalVolume holds bitwise.
VolumePair constrained_volumes(double raw) {
    const double sig = sigmoid(raw);
    const double v_f0 = kTotalVolume * (kFrothFracLo + kFrothFracRange * sig);
    const double v_p = kTotalVolume - v_f0;
    return {kTotalVolume - v_p, v_p};
}

std::pair<ad::Var, ad::Var> constrained_volumes(ad::Tape& tape, ad::Var raw) {
    ad::Var sig = tape.sigmoid(raw);
    ad::Var v_f0 = tape.scale(tape.shift(tape.scale(sig, kFrothFracRange), kFrothFracLo),
                              kTotalVolume);
    ad::Var v_p = tape.shift(tape.neg(v_f0), kTotalVolume);
    ad::Var v_f = tape.shift(tape.neg(v_p), kTotalVolume);
    return {v_f, v_p};
}

nlohmann::json to_json(const MlpModel& model) {
    return nlohmann::json{{"layer_sizes", model.layer_sizes}, {"params", model.params}};
}

MlpModel mlp_from_json(const nlohmann::json& j) {
    MlpModel model;
    model.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    model.params = j.at("params").get<std::vector<double>>();
    if (model.params.size() != mlp_param_count(model.layer_sizes))
        throw FormatError("mlp checkpoint: parameter array does not match the layer sizes");
    return model;
}

nlohmann::json to_json(const AdamState& state) {
    return nlohmann::json{{"lr", state.lr},       {"beta1", state.beta1},
                          {"beta2", state.beta2}, {"eps", state.eps},
                          {"step", state.step},   {"m", state.m},
                          {"v", state.v}};
}

AdamState adam_from_json(const nlohmann::json& j) {
    AdamState state;
    state.lr = j.at("lr").get<double>();
    state.beta1 = j.at("beta1").get<double>();
    state.beta2 = j.at("beta2").get<double>();
    state.eps = j.at("eps").get<double>();
    state.step = j.at("step").get<std::int64_t>();
    state.m = j.at("m").get<std::vector<double>>();
    state.v = j.at("v").get<std::vector<double>>();
    if (state.m.size() != state.v.size())
        throw FormatError("adam checkpoint: moment arrays disagree in size");
    return state;
}

} // namespace flotapinn::nn
