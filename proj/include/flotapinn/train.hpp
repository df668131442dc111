#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "flotapinn/baselines.hpp"
#include "flotapinn/data.hpp"
#include "flotapinn/nn.hpp"
#include "flotapinn/physics.hpp"

#include "json.hpp"

namespace flotapinn::train {

// Enumerator order is the benchmark table row order.
enum class ModelKind : int {
    kLinreg = 0,
    kForest,
    kTree,
    kDataDriven,
    kPinnBidirectional,
    kPinnUnidirectional,
    kPinnMassBalance,
};

inline constexpr int kNumModelKinds = 7;

std::string_view model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(std::string_view name); // throws ConfigError
physics::ResidualKind residual_kind_of(ModelKind kind);
bool is_network_kind(ModelKind kind);
int lambda_raw_count(ModelKind kind); // 3 bidirectional, 1 unidirectional/mass, 0 otherwise

struct TrainConfig {
    ModelKind kind = ModelKind::kDataDriven;
    std::vector<int> u_layers{12, 32, 64, 32, 2};
    std::vector<int> r_layers{15, 32, 1}; // consumed by the unidirectional kind only
    double lr = 1e-5;
    int batch = 128;
    int patience = 20000;   // counted in validation evaluations, one per epoch
    double tolerance = 1e-5;
    std::int64_t max_steps = 1000000;
    std::uint64_t seed = 1;
    std::filesystem::path train_path;
    std::filesystem::path val_path;
    std::filesystem::path test_path;
};

// Throws ConfigError on a violated invariant (batch/patience/tolerance
// bounds, layer widths, the 15-wide R-net input for the unidirectional kind).
void validate(const TrainConfig& config);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Small networks, high learning rate, short patience: converges on the
// 2000-row synthetic splits in seconds to minutes on one core.
TrainConfig desk_preset();
// Published cell experiments: wide nets, lr 1e-5, patience in the tens of
// thousands of evaluations.
TrainConfig cell1_preset();
TrainConfig cell2_preset();

// Incremental early stopping.  An evaluation improves iff
// best_so_far - loss > tolerance (strictly); the counter resets on
// improvement and training stops once it reaches patience.  The best index
// is the last improving evaluation.
class EarlyStop {
public:
    EarlyStop(int patience, double tolerance); // throws ConfigError on bad bounds

    // Feeds the next evaluation; returns true when training should stop.
    bool push(double loss);

    std::size_t count() const { return count_; }
    std::size_t best_index() const { return best_index_; }
    double best_loss() const { return best_loss_; }
    bool improved_last() const { return improved_last_; }

private:
    int patience_;
    double tolerance_;
    std::size_t count_ = 0;
    std::size_t best_index_ = 0;
    double best_loss_ = 0.0;
    int stagnant_ = 0;
    bool improved_last_ = false;
};

struct EarlyStopResult {
    bool stop = false;
    std::size_t stop_after = 0; // evaluations consumed when the stop fired
    std::size_t best_index = 0;
};

// Replays a full history through EarlyStop.  Throws UsageError when empty.
EarlyStopResult early_stop(std::span<const double> history, int patience, double tolerance);

// Per-input affine conditioning baked into the model: the network consumes
// (x - mean) / scale while the datasets, targets, and reported metrics stay
// in raw units.  Fitted on the training split and stored in the checkpoint.
struct InputConditioner {
    std::array<double, data::kNumInputs> mean{};
    std::array<double, data::kNumInputs> scale{}; // population std, 1 for constant columns
    std::array<double, data::kNumTargets> y_mean{};
    std::array<double, data::kNumTargets> y_scale{};

    static InputConditioner fit(const data::Dataset& ds); // throws DataError when empty

    std::array<double, data::kNumInputs> apply(std::span<const double> input) const;
};

nlohmann::json to_json(const InputConditioner& c);
InputConditioner conditioner_from_json(const nlohmann::json& j);

struct OutputMetrics {
    double mse = 0.0;
    double mre = 0.0;
    std::size_t mre_excluded = 0; // samples with |actual| < 1e-9, left out of the MRE mean
};

struct Metrics {
    OutputMetrics c_p;
    OutputMetrics c_f;
    double mse_total = 0.0; // mean over rows of the squared error summed over both outputs
};

inline constexpr double kMreExclusionFloor = 1e-9;

// Maps the 12 raw input columns of one row to (C_p, C_f) predictions.
using PredictFn = std::function<std::array<double, 2>(std::span<const double>)>;

// Unnormalized MSE and MRE against the dataset targets.  Throws EvalError
// when every sample of an output is excluded from the MRE.
Metrics evaluate(const data::Dataset& ds, const PredictFn& predict);

nlohmann::json to_json(const Metrics& m);

// Trained network state: the u-net, the lambda raws in decode order, the
// R-net for the unidirectional kind (layer_sizes empty otherwise), and the
// conditioning constants the forward pass depends on.
struct NnState {
    nn::MlpModel u;
    std::vector<double> lambda_raws;
    nn::MlpModel r;
    InputConditioner conditioner;
};

struct Checkpoint {
    ModelKind kind = ModelKind::kDataDriven;
    std::variant<NnState, baselines::LinearModel, baselines::TreeModel, baselines::ForestModel>
        model;
};

PredictFn predictor(const Checkpoint& ckpt);

nlohmann::json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct RunReport {
    TrainConfig config;
    std::vector<double> train_history; // per-epoch mean batch loss; empty for baseline kinds
    std::vector<double> val_history;   // per-epoch full-set MSE_u; single entry for baselines
    std::size_t best_epoch = 0;
    std::int64_t best_step = 0;
    double best_val_mse = 0.0;
    std::int64_t total_steps = 0;
    bool stopped_early = false;
    Metrics val;
    Metrics test;
    bool has_lambda = false;
    physics::LambdaValues lambda{}; // decoded at the final optimizer step
    std::string selected_options;   // tree/forest grid choice, e.g. "max_depth=8"
    double wall_seconds = 0.0;      // excluded from to_json: reports must be byte-stable
};

// Deterministic: wall_seconds is deliberately not serialized.
nlohmann::json to_json(const RunReport& report);

// Observed once per optimizer step, before the parameter update.
struct StepInfo {
    std::int64_t step = 0;  // 1-based, counting this batch
    std::size_t epoch = 0;
    double loss = 0.0;
    double data_term = 0.0;     // batch MSE_u
    double residual_term = 0.0; // batch mean squared residual, 0 for datadriven
    std::span<const std::size_t> batch_indices;
    std::span<const double> params; // flat [u | lambda | r] vector
};

using StepCallback = std::function<void(const StepInfo&)>;

struct TrainResult {
    RunReport report;
    Checkpoint checkpoint; // best-validation snapshot
};

// Runs one experiment end to end: loads the datasets, fits or trains the
// model, applies early stopping and best-checkpoint selection, and evaluates
// validation and test metrics at the best checkpoint.  Throws TrainError
// with the step index and the offending term when the loss turns non-finite.
TrainResult train_model(const TrainConfig& config, const StepCallback& on_step = {});

// Validation-MSE selection grids for the tree and forest kinds.
inline constexpr std::array<int, 3> kTreeDepthGrid{4, 8, 12};
inline constexpr std::array<int, 2> kForestTreesGrid{50, 100};
inline constexpr std::array<int, 3> kForestFeaturesGrid{4, 8, 12};

// Scaled 0-1 traces of actual vs predicted grades over one dataset, for
// plotting.  Actual columns are min-max scaled; predictions share the actual
// column's transform so the curves stay comparable.
void write_trace_csv(const data::Dataset& ds, const PredictFn& predict,
                     const std::filesystem::path& path);

struct BenchmarkConfig {
    TrainConfig base;               // kind is ignored; everything else is shared
    std::filesystem::path out_dir;  // traces per model; empty -> no trace files
    int threads = 1;                // member runs executed concurrently when > 1
};

struct BenchmarkRow {
    ModelKind kind = ModelKind::kLinreg;
    bool failed = false;
    std::string error;
    Metrics val;
    Metrics test;
    std::string selected_options;
    bool has_lambda = false;
    physics::LambdaValues lambda{};
    double wall_seconds = 0.0; // excluded from serialization
};

struct BenchmarkResult {
    std::vector<BenchmarkRow> rows; // fixed order: linreg, forest, tree, datadriven, bi, uni, mass
};

// Trains all seven model kinds on the shared datasets.  A member failure
// marks its row failed and the rest proceed.  Identical output regardless of
// thread count.
BenchmarkResult run_benchmark(const BenchmarkConfig& config);

// Headline C_f metrics first, matching the published table layout, then the
// C_p columns.
void write_benchmark_csv(const BenchmarkResult& result, const std::filesystem::path& path);
nlohmann::json to_json(const BenchmarkResult& result);

// FLOTAPINN_THREADS, clamped to [1, 64]; 1 when unset or unparsable.
int thread_cap_from_env();

} // namespace flotapinn::train
