#include "flotapinn/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flotapinn/errors.hpp"
#include "flotapinn/nn.hpp"
#include "flotapinn/rng.hpp"

namespace flotapinn::sim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kMinutesPerHour = 60.0;

// Stream tags keep every random purpose on its own deterministic stream.
std::uint64_t stream_signal(std::uint64_t seed, Split split, int col) {
    return Rng::mix(seed, 100 + static_cast<int>(split) * 32 + col);
}
std::uint64_t stream_noise(std::uint64_t seed, Split split, int col) {
    return Rng::mix(seed, 1000 + static_cast<int>(split) * 32 + col);
}
std::uint64_t stream_outliers(std::uint64_t seed, Split split) {
    return Rng::mix(seed, 2000 + static_cast<int>(split));
}

} // namespace

std::string_view split_name(Split split) {
    switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    }
    throw UsageError("split_name: unknown split");
}

double TrueParams::v_p() const {
    const double v_f0 = nn::kTotalVolume * v_f_fraction;
    return nn::kTotalVolume - v_f0;
}

double TrueParams::v_f() const { return nn::kTotalVolume - v_p(); }

void validate(const SimConfig& config) {
    if (config.sample_interval <= 0.0)
        throw ConfigError("sim config: sample interval must be positive");
    if (config.dt_substep <= 0.0 || config.dt_substep > config.sample_interval)
        throw ConfigError("sim config: dt substep must be in (0, sample interval]");
    for (int h : config.horizons)
        if (h <= 0) throw ConfigError("sim config: every split horizon must be positive");
    if (config.true_params.v_f_fraction < nn::kFrothFracLo ||
        config.true_params.v_f_fraction > nn::kFrothFracHi)
        throw ConfigError("sim config: true froth fraction outside [0.04, 0.07]");
    if (config.true_params.alpha_p <= 0.0 || config.true_params.alpha_f <= 0.0)
        throw ConfigError("sim config: true rate coefficients must be positive");
    if (config.noise.outlier_rate < 0.0 || config.noise.outlier_rate > 0.05)
        throw ConfigError("sim config: outlier rate must be in [0, 0.05]");
    if (config.noise.outlier_scale <= 0.0)
        throw ConfigError("sim config: outlier scale must be positive");
    for (double s : config.noise.sigma)
        if (s < 0.0 || !std::isfinite(s))
            throw ConfigError("sim config: noise sigma must be finite and nonnegative");
    for (const RegimeSpec& regime : config.regimes) {
        for (const SignalSpec& sig : regime.signals) {
            if (sig.clip_lo > sig.clip_hi)
                throw ConfigError("sim config: signal clip bounds are inverted");
            for (const WaveSpec& w : sig.waves)
                if (w.period <= 0.0)
                    throw ConfigError("sim config: wave period must be positive");
        }
    }
}

InputSeries synth_inputs(const SimConfig& config, Split split) {
    validate(config);
    const int n = config.horizons[static_cast<int>(split)];
    const RegimeSpec& regime = config.regimes[static_cast<int>(split)];

    InputSeries series;
    series.t.resize(n);
    for (int i = 0; i < n; ++i) series.t[i] = config.sample_interval * i;

    for (int c = 0; c < kNumExogenous; ++c) {
        const SignalSpec& spec = regime.signals[c];
        Rng rng(stream_signal(config.seed, split, c));

        std::vector<double> phases;
        phases.reserve(spec.waves.size());
        for (const WaveSpec& w : spec.waves)
            phases.push_back(w.phase + 2.0 * kPi * rng.uniform());

        std::vector<double>& col = series.cols[c];
        col.resize(n);
        double walk = 0.0;
        for (int i = 0; i < n; ++i) {
            const double frac = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
            double v = spec.baseline + spec.drift * frac;
            for (std::size_t w = 0; w < spec.waves.size(); ++w)
                v += spec.waves[w].amplitude *
                     std::sin(2.0 * kPi * series.t[i] / spec.waves[w].period + phases[w]);
            if (spec.wander_sigma > 0.0) walk += rng.normal(0.0, spec.wander_sigma);
            v += walk;
            col[i] = std::clamp(v, spec.clip_lo, spec.clip_hi);
        }
    }
    return series;
}

namespace {

struct Rhs {
    double dc_p;
    double dc_f;
};

// Right-hand side of the bidirectional concentration ODEs with flows already
// converted to m³/min.
Rhs cell_rhs(double c_p, double c_f, double c_feed, double q_air, double q_feed, double q_t,
             double q_c, double v_p, double v_f, double alpha_p, double alpha_f) {
    const double dc_p = c_feed * q_feed / v_p + alpha_f * q_air * c_f * v_f / v_p -
                        (alpha_p * q_air + q_t / v_p) * c_p;
    const double dc_f = alpha_p * q_air * c_p * v_p / v_f - (alpha_f * q_air + q_c / v_f) * c_f;
    return {dc_p, dc_f};
}

} // namespace

data::Row Trajectory::row(std::size_t i) const {
    data::Row r;
    r[data::kT] = t[i];
    for (int c = 0; c < kNumExogenous; ++c) r[1 + c] = inputs[c][i];
    r[data::kCPTail] = c_p[i];
    r[data::kCFConc] = c_f[i];
    return r;
}

Trajectory integrate_cell(const TrueParams& params, const InputSeries& inputs,
                          double sample_interval, double dt_substep, double init_c_p,
                          double init_c_f) {
    if (dt_substep <= 0.0 || dt_substep > sample_interval)
        throw UsageError("integrate_cell: dt substep must be in (0, sample interval]");
    const std::size_t n = inputs.size();
    const double v_p = params.v_p();
    const double v_f = params.v_f();

    Trajectory traj;
    traj.t = inputs.t;
    traj.inputs = inputs.cols;
    traj.c_p.resize(n);
    traj.c_f.resize(n);
    traj.dc_p_dt.resize(n);
    traj.dc_f_dt.resize(n);

    const int n_sub = std::max(1, static_cast<int>(std::ceil(sample_interval / dt_substep - 1e-12)));
    const double h = sample_interval / n_sub;

    double c_p = init_c_p;
    double c_f = init_c_f;
    for (std::size_t i = 0; i < n; ++i) {
        const double q_air = inputs.cols[0][i] / kMinutesPerHour;
        const double c_feed = inputs.cols[4][i];
        const double q_feed = inputs.cols[7][i] / kMinutesPerHour;
        const double q_t = inputs.cols[9][i] / kMinutesPerHour;
        const double q_c = inputs.cols[10][i] / kMinutesPerHour;

        auto rhs = [&](double cp, double cf) {
            return cell_rhs(cp, cf, c_feed, q_air, q_feed, q_t, q_c, v_p, v_f, params.alpha_p,
                            params.alpha_f);
        };

        traj.c_p[i] = c_p;
        traj.c_f[i] = c_f;
        const Rhs d = rhs(c_p, c_f);
        traj.dc_p_dt[i] = d.dc_p;
        traj.dc_f_dt[i] = d.dc_f;

        if (!std::isfinite(c_p) || !std::isfinite(c_f) || std::fabs(c_p) > 1e12 ||
            std::fabs(c_f) > 1e12)
            throw SimError("integrate_cell: state blew up at sample index " + std::to_string(i));

        if (i + 1 == n) break;
        // Zero-order hold: the sample-i inputs drive the whole interval.
        for (int s = 0; s < n_sub; ++s) {
            const Rhs k1 = rhs(c_p, c_f);
            const Rhs k2 = rhs(c_p + 0.5 * h * k1.dc_p, c_f + 0.5 * h * k1.dc_f);
            const Rhs k3 = rhs(c_p + 0.5 * h * k2.dc_p, c_f + 0.5 * h * k2.dc_f);
            const Rhs k4 = rhs(c_p + h * k3.dc_p, c_f + h * k3.dc_f);
            c_p += h / 6.0 * (k1.dc_p + 2.0 * k2.dc_p + 2.0 * k3.dc_p + k4.dc_p);
            c_f += h / 6.0 * (k1.dc_f + 2.0 * k2.dc_f + 2.0 * k3.dc_f + k4.dc_f);
        }
    }
    return traj;
}

NoisyDataset inject_noise_outliers(const Trajectory& traj, const SimConfig& config, Split split) {
    validate(config);
    const std::size_t n = traj.size();

    NoisyDataset out;
    out.dataset.rows.reserve(n);
    out.outlier_tag.assign(n, 0);

    for (std::size_t i = 0; i < n; ++i) out.dataset.rows.push_back(traj.row(i));

    // Per-column Gaussian noise on everything except time.
    for (int c = 1; c < data::kNumColumns; ++c) {
        const double sigma = config.noise.sigma[c - 1];
        if (sigma == 0.0) continue;
        Rng rng(stream_noise(config.seed, split, c));
        for (std::size_t i = 0; i < n; ++i)
            out.dataset.rows[i][c] += rng.normal(0.0, sigma);
    }

    // Exact-count outlier rows chosen without replacement, one corrupted
    // column each.
    const auto n_outliers =
        static_cast<std::size_t>(std::llround(config.noise.outlier_rate * static_cast<double>(n)));
    out.n_outliers = n_outliers;
    if (n_outliers > 0) {
        Rng rng(stream_outliers(config.seed, split));
        std::vector<std::size_t> indices(n);
        for (std::size_t i = 0; i < n; ++i) indices[i] = i;
        for (std::size_t k = 0; k < n_outliers; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.below(n - k));
            std::swap(indices[k], indices[j]);
        }
        for (std::size_t k = 0; k < n_outliers; ++k) {
            const std::size_t row = indices[k];
            const int col = 1 + static_cast<int>(rng.below(data::kNumColumns - 1));
            out.dataset.rows[row][col] *= config.noise.outlier_scale;
            out.outlier_tag[row] = 1;
        }
    }

    // Grade columns cannot be negative measurements.
    for (std::size_t i = 0; i < n; ++i) {
        for (int c : {static_cast<int>(data::kCFeed), static_cast<int>(data::kCPTail),
                      static_cast<int>(data::kCFConc)}) {
            if (out.dataset.rows[i][c] < 0.0) out.dataset.rows[i][c] = 0.0;
        }
    }
    return out;
}

SplitResult simulate_split(const SimConfig& config, Split split) {
    SplitResult result;
    const InputSeries inputs = synth_inputs(config, split);
    result.exact = integrate_cell(config.true_params, inputs, config.sample_interval,
                                  config.dt_substep, config.init_c_p, config.init_c_f);
    result.noisy = inject_noise_outliers(result.exact, config, split);
    return result;
}

namespace {

SignalSpec signal(double baseline, double drift, std::vector<WaveSpec> waves, double wander,
                  double clip_lo = 0.0,
                  double clip_hi = std::numeric_limits<double>::infinity()) {
    SignalSpec s;
    s.baseline = baseline;
    s.drift = drift;
    s.waves = std::move(waves);
    s.wander_sigma = wander;
    s.clip_lo = clip_lo;
    s.clip_hi = clip_hi;
    return s;
}

RegimeSpec desk_regime(int split) {
    // Baselines shift from train to test so the test split is genuinely out
    // of distribution, mirroring distinct plant collection periods.
    const double s = static_cast<double>(split); // 0 train, 1 val, 2 test
    RegimeSpec r;
    // Q_air [m³/h]
    r.signals[0] = signal(100.0 + 4.0 * s + (split == 2 ? 4.0 : 0.0), 3.0,
                          {{6.0, 620.0, 0.0}, {2.5, 145.0, 0.0}}, 0.05);
    // h [%]
    r.signals[1] = signal(55.0 - s + (split == 2 ? 4.0 : 0.0), -1.0, {{2.5, 480.0, 0.0}}, 0.03,
                          0.0, 100.0);
    // C_s [%]
    r.signals[2] = signal(32.0 + 2.0 * s, 1.0, {{2.0, 710.0, 0.0}}, 0.02, 0.0, 100.0);
    // R_s_feed [%]
    r.signals[3] = signal(60.0 - s + (split == 2 ? 4.0 : 0.0), 0.0, {{3.0, 530.0, 0.0}}, 0.03,
                          0.0, 100.0);
    // C_feed [g/t]
    r.signals[4] = signal(10.0 - 0.5 * s + (split == 2 ? 2.5 : 0.0), 0.4,
                          {{1.2, 660.0, 0.0}, {0.5, 180.0, 0.0}}, 0.008);
    // R_Au_feed [%]
    r.signals[5] = signal(85.0 - s + (split == 2 ? 4.0 : 0.0), 0.0, {{2.0, 600.0, 0.0}}, 0.02,
                          0.0, 100.0);
    // P80 [µm]
    r.signals[6] = signal(80.0 + 2.0 * s + (split == 2 ? 4.0 : 0.0), 2.0, {{4.0, 880.0, 0.0}},
                          0.04);
    // Q_feed [m³/h]
    r.signals[7] = signal(120.0 + 8.0 * s + (split == 2 ? 9.0 : 0.0), 4.0,
                          {{8.0, 700.0, 0.0}, {3.0, 210.0, 0.0}}, 0.06);
    // F_s_feed [t/h]
    r.signals[8] = signal(55.0 + 3.0 * s + (split == 2 ? 4.0 : 0.0), 1.5, {{4.0, 760.0, 0.0}},
                          0.03);
    // Q_t [m³/h]
    r.signals[9] = signal(113.0 + 7.0 * s + (split == 2 ? 8.0 : 0.0), 3.0,
                          {{7.0, 640.0, 0.0}, {2.5, 260.0, 0.0}}, 0.06);
    // Q_c [m³/h]
    r.signals[10] = signal(8.0 + 0.5 * s + (split == 2 ? 0.5 : 0.0), 0.2, {{0.8, 540.0, 0.0}},
                           0.01);
    return r;
}

} // namespace

SimConfig desk_config() {
    SimConfig config;
    config.seed = 1;
    config.horizons = {2000, 1000, 1200};
    config.sample_interval = 5.0;
    config.dt_substep = 0.05;
    // Start near the operating point so the data carries no artificial
    // startup ramp from an empty cell.
    config.init_c_p = 9.5;
    config.init_c_f = 11.5;
    config.true_params = TrueParams{};
    for (int s = 0; s < 3; ++s) config.regimes[s] = desk_regime(s);

    // Schema order Q_air, h, C_s, R_s_feed, C_feed, R_Au_feed, P80, Q_feed,
    // F_s_feed, Q_t, Q_c, C_p_tail, C_f_conc.
    config.noise.sigma = {0.8, 0.35, 0.3, 0.35, 0.12, 0.3, 0.8, 1.0, 0.5, 1.0, 0.1, 0.20, 0.30};
    config.noise.outlier_rate = 0.02;
    config.noise.outlier_scale = 10.0;
    return config;
}

SimConfig paper_scale_config(int cell) {
    SimConfig config = desk_config();
    if (cell == 1)
        config.horizons = {17724, 8936, 11679};
    else if (cell == 2)
        config.horizons = {17551, 9157, 12430};
    else
        throw ConfigError("paper scale config: cell must be 1 or 2");
    return config;
}

namespace {

nlohmann::json to_json(const SignalSpec& s) {
    nlohmann::json waves = nlohmann::json::array();
    for (const WaveSpec& w : s.waves)
        waves.push_back({{"amplitude", w.amplitude}, {"period", w.period}, {"phase", w.phase}});
    nlohmann::json j{{"baseline", s.baseline},
                     {"drift", s.drift},
                     {"waves", waves},
                     {"wander_sigma", s.wander_sigma},
                     {"clip_lo", s.clip_lo}};
    if (std::isfinite(s.clip_hi)) j["clip_hi"] = s.clip_hi;
    return j;
}

SignalSpec signal_from_json(const nlohmann::json& j) {
    SignalSpec s;
    s.baseline = j.at("baseline").get<double>();
    s.drift = j.at("drift").get<double>();
    for (const auto& w : j.at("waves"))
        s.waves.push_back({w.at("amplitude").get<double>(), w.at("period").get<double>(),
                           w.at("phase").get<double>()});
    s.wander_sigma = j.at("wander_sigma").get<double>();
    s.clip_lo = j.at("clip_lo").get<double>();
    s.clip_hi = j.contains("clip_hi") ? j.at("clip_hi").get<double>()
                                      : std::numeric_limits<double>::infinity();
    return s;
}

} // namespace

nlohmann::json to_json(const SimConfig& config) {
    nlohmann::json regimes = nlohmann::json::array();
    for (const RegimeSpec& regime : config.regimes) {
        nlohmann::json signals = nlohmann::json::array();
        for (const SignalSpec& s : regime.signals) signals.push_back(to_json(s));
        regimes.push_back({{"signals", signals}});
    }
    return nlohmann::json{
        {"seed", config.seed},
        {"horizons", config.horizons},
        {"sample_interval", config.sample_interval},
        {"dt_substep", config.dt_substep},
        {"init_c_p", config.init_c_p},
        {"init_c_f", config.init_c_f},
        {"true_params",
         {{"v_f_fraction", config.true_params.v_f_fraction},
          {"alpha_p", config.true_params.alpha_p},
          {"alpha_f", config.true_params.alpha_f}}},
        {"regimes", regimes},
        {"noise",
         {{"sigma", config.noise.sigma},
          {"outlier_rate", config.noise.outlier_rate},
          {"outlier_scale", config.noise.outlier_scale}}},
    };
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
    SimConfig config;
    config.seed = j.at("seed").get<std::uint64_t>();
    config.horizons = j.at("horizons").get<std::array<int, 3>>();
    config.sample_interval = j.at("sample_interval").get<double>();
    config.dt_substep = j.at("dt_substep").get<double>();
    config.init_c_p = j.at("init_c_p").get<double>();
    config.init_c_f = j.at("init_c_f").get<double>();
    const auto& tp = j.at("true_params");
    config.true_params.v_f_fraction = tp.at("v_f_fraction").get<double>();
    config.true_params.alpha_p = tp.at("alpha_p").get<double>();
    config.true_params.alpha_f = tp.at("alpha_f").get<double>();
    const auto& regimes = j.at("regimes");
    if (regimes.size() != 3)
        throw FormatError("sim config json: expected exactly 3 regimes");
    for (int s = 0; s < 3; ++s) {
        const auto& signals = regimes[s].at("signals");
        if (signals.size() != kNumExogenous)
            throw FormatError("sim config json: expected 11 signals per regime");
        for (int c = 0; c < kNumExogenous; ++c)
            config.regimes[s].signals[c] = signal_from_json(signals[c]);
    }
    const auto& noise = j.at("noise");
    config.noise.sigma = noise.at("sigma").get<std::array<double, data::kNumColumns - 1>>();
    config.noise.outlier_rate = noise.at("outlier_rate").get<double>();
    config.noise.outlier_scale = noise.at("outlier_scale").get<double>();
    validate(config);
    return config;
}

} // namespace flotapinn::sim
