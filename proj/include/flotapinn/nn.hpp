#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "flotapinn/autodiff.hpp"

#include "json.hpp"

namespace flotapinn::nn {

// Fully connected network with tanh hidden activations and an identity
// output layer.  Parameters are stored flat, layer by layer: the weight
// matrix row-major [n_out][n_in], then the bias vector.
struct MlpModel {
    std::vector<int> layer_sizes;
    std::vector<double> params;

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
};

std::size_t mlp_param_count(std::span<const int> layer_sizes);

// Glorot-uniform weights, bound sqrt(6 / (n_in + n_out)) per layer, biases
// zero.  The same seed yields bit-identical parameters.
MlpModel mlp_init(std::vector<int> layer_sizes, std::uint64_t seed);

// Taped forward pass over parameters already lifted onto the tape (one Var
// per parameter, in storage order).  Inputs carry whatever tangent seeding
// the caller chose; outputs carry values and tangents of the same pass.
std::vector<ad::Var> mlp_forward(ad::Tape& tape, std::span<const int> layer_sizes,
                                 std::span<const ad::Var> params,
                                 std::span<const ad::Var> input);

// Prediction-only forward passes used for validation and evaluation, where
// no graph is needed.  Dual carries (value, d/dt) through the same
// arithmetic as the taped pass.
struct Dual {
    double v = 0.0;
    double t = 0.0;
};

std::vector<double> mlp_forward_value(const MlpModel& model, std::span<const double> input);
std::vector<Dual> mlp_forward_dual(const MlpModel& model, std::span<const Dual> input);

// Adam in its canonical form: bias-corrected first and second moments,
// p -= lr * m_hat / (sqrt(v_hat) + eps).
struct AdamState {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;

    AdamState() = default;
    AdamState(std::size_t n, double learning_rate)
        : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}
};

// One update in place.  Throws TrainError naming the parameter index if a
// gradient entry is not finite.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads);

// Froth / pulp volume split driven by one unconstrained scalar:
//   V_f = 26.7 * (0.04 + (0.07 - 0.04) * sigmoid(raw)),   V_p = 26.7 - V_f.
// The sigmoid is composed as 0.5 + 0.5 * tanh(0.5 x) so the taped and plain
// paths execute the identical float sequence.
inline constexpr double kTotalVolume = 26.7;
inline constexpr double kFrothFracLo = 0.04;
inline constexpr double kFrothFracHi = 0.07;

struct VolumePair {
    double v_f;
    double v_p;
};

VolumePair constrained_volumes(double raw);
std::pair<ad::Var, ad::Var> constrained_volumes(ad::Tape& tape, ad::Var raw);

double sigmoid(double x);
double softplus(double x);
double softplus_inverse(double y); // raw such that softplus(raw) == y

// Serialization helpers shared by the model checkpoint format.
nlohmann::json to_json(const MlpModel& model);
MlpModel mlp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j);

} // namespace flotapinn::nn
