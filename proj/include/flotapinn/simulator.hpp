#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

#include "flotapinn/data.hpp"

#include "json.hpp"

namespace flotapinn::sim {

enum class Split : int { kTrain = 0, kVal = 1, kTest = 2 };

std::string_view split_name(Split split);

// One sinusoidal component of an exogenous signal.  The effective phase is
// the configured offset plus a seeded draw, so different seeds decorrelate
// the waves without touching the config.
struct WaveSpec {
    double amplitude = 0.0;
    double period = 1.0; // min
    double phase = 0.0;  // rad, added to the seeded phase
};

// Generator for one exogenous variable:
// baseline + drift·(i/(n−1)) + Σ waves + Gaussian random walk, then clipped.
struct SignalSpec {
    double baseline = 0.0;
    double drift = 0.0; // total change across the split's horizon
    std::vector<WaveSpec> waves;
    double wander_sigma = 0.0; // per-step increment of the random walk
    double clip_lo = 0.0;
    double clip_hi = std::numeric_limits<double>::infinity();
};

// The eleven exogenous signals in schema order Q_air .. Q_c.
inline constexpr int kNumExogenous = 11;

struct RegimeSpec {
    std::array<SignalSpec, kNumExogenous> signals;
};

// Ground-truth cell parameters.  Volumes derive from the froth fraction so
// the configured truth always satisfies the constrained-volume bounds.
struct TrueParams {
    double v_f_fraction = 0.055; // of the 26.7 m³ total
    double alpha_p = 0.004;      // per m³/min of air
    double alpha_f = 0.002;

    double v_f() const;
    double v_p() const;
};

struct NoiseSpec {
    // Gaussian σ per non-time column, schema order Q_air .. C_f_conc.
    std::array<double, data::kNumColumns - 1> sigma{};
    double outlier_rate = 0.0;  // fraction of rows, in [0, 0.05]
    double outlier_scale = 10.0;
};

struct SimConfig {
    std::uint64_t seed = 1;
    std::array<int, 3> horizons{2000, 1000, 1200}; // rows per split
    double sample_interval = 5.0;                  // min
    double dt_substep = 0.05;                      // min
    double init_c_p = 0.0;
    double init_c_f = 0.0;
    TrueParams true_params;
    std::array<RegimeSpec, 3> regimes; // per split
    NoiseSpec noise;
};

// Throws ConfigError when an invariant is violated.
void validate(const SimConfig& config);

nlohmann::json to_json(const SimConfig& config);
SimConfig sim_config_from_json(const nlohmann::json& j);

// Desk-scale defaults: distribution-shifted splits, mild noise, 2% outliers.
SimConfig desk_config();
// Paper-scale presets keep the desk regimes but use the published dataset
// sizes (cell 1 or 2).
SimConfig paper_scale_config(int cell);

struct InputSeries {
    std::vector<double> t;
    std::array<std::vector<double>, kNumExogenous> cols;

    std::size_t size() const { return t.size(); }
};

InputSeries synth_inputs(const SimConfig& config, Split split);

struct Trajectory {
    std::vector<double> t;
    std::array<std::vector<double>, kNumExogenous> inputs;
    std::vector<double> c_p, c_f;
    std::vector<double> dc_p_dt, dc_f_dt; // exact RHS values at sample times

    std::size_t size() const { return t.size(); }
    data::Row row(std::size_t i) const;
};

// Classic RK4 over the bidirectional concentration ODEs with zero-order-hold
// inputs.  Derivatives are recorded from the ODE right-hand side at each
// sample.  Throws SimError with the sample index if the state blows up.
Trajectory integrate_cell(const TrueParams& params, const InputSeries& inputs,
                          double sample_interval, double dt_substep, double init_c_p,
                          double init_c_f);

struct NoisyDataset {
    data::Dataset dataset;
    std::vector<std::uint8_t> outlier_tag; // internal, never exported
    std::size_t n_outliers = 0;
};

// Per-column Gaussian noise plus a seeded exact-count fraction of rows with
// one column multiplied by outlier-scale; grade columns clipped at zero.
NoisyDataset inject_noise_outliers(const Trajectory& traj, const SimConfig& config, Split split);

// Full pipeline for one split: synth → integrate → corrupt.
struct SplitResult {
    Trajectory exact;
    NoisyDataset noisy;
};

SplitResult simulate_split(const SimConfig& config, Split split);

} // namespace flotapinn::sim
