#include "flotapinn/cli.hpp"

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "flotapinn/data.hpp"
#include "flotapinn/errors.hpp"
#include "flotapinn/preprocess.hpp"
#include "flotapinn/simulator.hpp"
#include "flotapinn/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace flotapinn::cli {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

nlohmann::json load_json_file(const fs::path& path, const std::string& what) {
    std::ifstream in(path);
    if (!in) throw FormatError(what + ": cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(what + ": '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return j;
}

void write_json_file(const nlohmann::json& j, const fs::path& path, const std::string& what) {
    std::ofstream out(path);
    if (!out) throw FormatError(what + ": cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw FormatError(what + ": failed writing '" + path.string() + "'");
}

// Flag values shared by every subcommand; each one binds its own copy.
struct Opts {
    std::string config;
    std::string preset = "desk";
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_dir;
    std::string in_path;
};

sim::SimConfig sim_config_for(const Opts& o) {
    sim::SimConfig cfg;
    if (!o.config.empty())
        cfg = sim::sim_config_from_json(load_json_file(o.config, "simulate"));
    else if (o.preset == "cell1-paper")
        cfg = sim::paper_scale_config(1);
    else if (o.preset == "cell2-paper")
        cfg = sim::paper_scale_config(2);
    else
        cfg = sim::desk_config();
    if (o.seed_given) cfg.seed = o.seed;
    sim::validate(cfg);
    return cfg;
}

train::TrainConfig train_config_for(const Opts& o) {
    train::TrainConfig cfg;
    if (!o.config.empty())
        cfg = train::train_config_from_json(load_json_file(o.config, "train config"));
    else if (o.preset == "cell1-paper")
        cfg = train::cell1_preset();
    else if (o.preset == "cell2-paper")
        cfg = train::cell2_preset();
    else
        cfg = train::desk_preset();
    if (o.seed_given) cfg.seed = o.seed;
    return cfg;
}

// Split file inside --in: the preprocessed variant wins when present.
fs::path split_path(const fs::path& dir, const char* split) {
    fs::path filtered = dir / (std::string(split) + "-filtered.csv");
    if (fs::exists(filtered)) return filtered;
    return dir / (std::string(split) + ".csv");
}

void fill_dataset_paths(train::TrainConfig& cfg, const Opts& o) {
    if (!o.in_path.empty()) {
        const fs::path dir = o.in_path;
        if (cfg.train_path.empty()) cfg.train_path = split_path(dir, "train");
        if (cfg.val_path.empty()) cfg.val_path = split_path(dir, "val");
        if (cfg.test_path.empty()) cfg.test_path = split_path(dir, "test");
    }
    if (cfg.train_path.empty() || cfg.val_path.empty() || cfg.test_path.empty())
        throw ConfigError("dataset paths missing: pass --in DIR or set them in --config");
}

int cmd_simulate(const Opts& o, std::ostream& out) {
    const sim::SimConfig cfg = sim_config_for(o);
    const fs::path dir = o.out_dir;
    fs::create_directories(dir);

    constexpr std::array<std::pair<sim::Split, const char*>, 3> kSplits{{
        {sim::Split::kTrain, "train"},
        {sim::Split::kVal, "val"},
        {sim::Split::kTest, "test"},
    }};
    std::array<std::size_t, 3> rows{};
    for (std::size_t i = 0; i < kSplits.size(); ++i) {
        const sim::SplitResult res = sim::simulate_split(cfg, kSplits[i].first);
        rows[i] = res.noisy.dataset.size();
        data::export_csv(res.noisy.dataset, dir / (std::string(kSplits[i].second) + ".csv"));
    }

    const sim::TrueParams& tp = cfg.true_params;
    const nlohmann::json truth{{"v_p", tp.v_p()},
                               {"v_f", tp.v_f()},
                               {"v_f_fraction", tp.v_f_fraction},
                               {"alpha_p", tp.alpha_p},
                               {"alpha_f", tp.alpha_f}};
    write_json_file({{"truth", truth}, {"config", sim::to_json(cfg)}}, dir / "sim-truth.json",
                    "simulate");

    out << "simulate: wrote train.csv (" << rows[0] << " rows), val.csv (" << rows[1]
        << " rows), test.csv (" << rows[2] << " rows), sim-truth.json -> " << dir.string()
        << '\n';
    return 0;
}

int cmd_preprocess(const Opts& o, std::ostream& out) {
    const fs::path in = o.in_path;
    const data::Dataset ds = data::import_csv(in);
    const preprocess::FilterResult res =
        preprocess::iqr_filter(ds, preprocess::default_filter_columns());

    const fs::path dir = o.out_dir;
    fs::create_directories(dir);
    const std::string stem = in.stem().string();
    data::export_csv(res.filtered, dir / (stem + "-filtered.csv"));
    preprocess::export_stats_csv(res, dir / (stem + "-stats.csv"));

    out << "preprocess: removed " << res.removed.size() << " of " << ds.size()
        << " rows; wrote " << stem << "-filtered.csv, " << stem << "-stats.csv -> "
        << dir.string() << '\n';
    return 0;
}

int cmd_train(const Opts& o, std::ostream& out) {
    train::TrainConfig cfg = train_config_for(o);
    fill_dataset_paths(cfg, o);
    train::validate(cfg);

    const fs::path dir = o.out_dir;
    fs::create_directories(dir);

    const auto t0 = std::chrono::steady_clock::now();
    const train::TrainResult res = train::train_model(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    train::save_checkpoint(res.checkpoint, dir / "checkpoint.json");
    write_json_file(train::to_json(res.report), dir / "report.json", "train");
    const data::Dataset test_ds = data::import_csv(cfg.test_path);
    train::write_trace_csv(test_ds, train::predictor(res.checkpoint), dir / "trace.csv");
    // Wall-clock stays out of the JSON artifacts so reruns stay byte-identical.
    std::ofstream timings(dir / "timings.log");
    timings << train::model_kind_name(cfg.kind) << ' ' << secs << "s\n";

    out << "train: " << train::model_kind_name(cfg.kind) << " best val MSE "
        << fmt(res.report.best_val_mse) << " (epoch " << res.report.best_epoch << "); test C_f MSE "
        << fmt(res.report.test.c_f.mse) << " MRE " << fmt(res.report.test.c_f.mre) << " -> "
        << dir.string() << '\n';
    return 0;
}

int cmd_benchmark(const Opts& o, std::ostream& out) {
    train::BenchmarkConfig bc;
    bc.base = train_config_for(o);
    fill_dataset_paths(bc.base, o);
    bc.out_dir = o.out_dir;
    bc.threads = train::thread_cap_from_env();

    const train::BenchmarkResult result = train::run_benchmark(bc);

    int failed = 0;
    const train::BenchmarkRow* best = nullptr;
    for (const train::BenchmarkRow& row : result.rows) {
        if (row.failed) {
            ++failed;
            continue;
        }
        if (best == nullptr || row.test.c_f.mse < best->test.c_f.mse) best = &row;
    }

    out << "benchmark: " << result.rows.size() << " models -> "
        << (fs::path(o.out_dir) / "benchmark.csv").string();
    if (best != nullptr)
        out << "; best test C_f MSE " << train::model_kind_name(best->kind) << ' '
            << fmt(best->test.c_f.mse);
    if (failed > 0) out << "; " << failed << " failed";
    out << '\n';
    return 0;
}

int cmd_evaluate(const Opts& o, std::ostream& out) {
    const train::Checkpoint ckpt = train::load_checkpoint(o.config);
    const data::Dataset ds = data::import_csv(o.in_path);
    const train::PredictFn fn = train::predictor(ckpt);
    const train::Metrics m = train::evaluate(ds, fn);

    if (!o.out_dir.empty()) {
        const fs::path dir = o.out_dir;
        fs::create_directories(dir);
        write_json_file({{"kind", train::model_kind_name(ckpt.kind)},
                         {"dataset", fs::path(o.in_path).string()},
                         {"metrics", train::to_json(m)}},
                        dir / "metrics.json", "evaluate");
        train::write_trace_csv(ds, fn, dir / "trace.csv");
    }

    out << "evaluate: " << train::model_kind_name(ckpt.kind) << " on "
        << fs::path(o.in_path).filename().string() << " (" << ds.size() << " rows): C_f MSE "
        << fmt(m.c_f.mse) << " MRE " << fmt(m.c_f.mre) << ", C_p MSE " << fmt(m.c_p.mse)
        << " MRE " << fmt(m.c_p.mre) << '\n';
    return 0;
}

std::string render_metrics_table(const nlohmann::json& val, const nlohmann::json& test) {
    const auto row = [](const char* name, const nlohmann::json& m) {
        return "| " + std::string(name) + " | " + fmt(m.at("c_f").at("mse").get<double>()) +
               " | " + fmt(m.at("c_f").at("mre").get<double>()) + " | " +
               fmt(m.at("c_p").at("mse").get<double>()) + " | " +
               fmt(m.at("c_p").at("mre").get<double>()) + " |\n";
    };
    return "| split | C_f MSE | C_f MRE | C_p MSE | C_p MRE |\n"
           "|---|---|---|---|---|\n" +
           row("val", val) + row("test", test);
}

std::string render_run(const nlohmann::json& j) {
    const nlohmann::json& cfg = j.at("config");
    std::string s = "\n## Training run: " + cfg.at("kind").get<std::string>() + "\n\n";
    s += "- seed " + cfg.at("seed").dump() + ", lr " + fmt(cfg.at("lr").get<double>()) +
         ", batch " + cfg.at("batch").dump() + ", u-net " + cfg.at("u_layers").dump() + "\n";
    s += "- steps " + j.at("total_steps").dump() + ", best epoch " + j.at("best_epoch").dump() +
         " of " + std::to_string(j.at("val_history").size() - 1) + ", stopped early: " +
         (j.at("stopped_early").get<bool>() ? "yes" : "no") + "\n";
    s += "- best validation MSE " + fmt(j.at("best_val_mse").get<double>()) + "\n";
    const nlohmann::json& lam = j.at("lambda");
    if (lam.is_object() && lam.contains("v_f")) {
        s += "- learned parameters: V_p " + fmt(lam.at("v_p").get<double>()) + " m3, V_f " +
             fmt(lam.at("v_f").get<double>()) + " m3";
        if (lam.contains("alpha_p"))
            s += ", alpha_p " + fmt(lam.at("alpha_p").get<double>()) + ", alpha_f " +
                 fmt(lam.at("alpha_f").get<double>());
        s += "\n";
    }
    const std::string options = j.value("selected_options", std::string());
    if (!options.empty()) s += "- selected " + options + "\n";
    s += "\n" + render_metrics_table(j.at("val"), j.at("test"));
    return s;
}

std::string render_bench(const nlohmann::json& j) {
    std::string s = "\n## Benchmark\n\n";
    s += "| model | status | test C_f MSE | test C_f MRE | test C_p MSE | test C_p MRE "
         "| val C_f MSE | V_f (m3) |\n";
    s += "|---|---|---|---|---|---|---|---|\n";
    for (const nlohmann::json& row : j.at("rows")) {
        const std::string name = row.at("model").get<std::string>();
        if (row.at("failed").get<bool>()) {
            s += "| " + name + " | failed | | | | | | |\n";
            continue;
        }
        const nlohmann::json& test = row.at("test");
        const nlohmann::json& val = row.at("val");
        const std::string v_f =
            row.contains("lambda") ? fmt(row.at("lambda").at("v_f").get<double>()) : "";
        s += "| " + name + " | ok | " + fmt(test.at("c_f").at("mse").get<double>()) + " | " +
             fmt(test.at("c_f").at("mre").get<double>()) + " | " +
             fmt(test.at("c_p").at("mse").get<double>()) + " | " +
             fmt(test.at("c_p").at("mre").get<double>()) + " | " +
             fmt(val.at("c_f").at("mse").get<double>()) + " | " + v_f + " |\n";
    }
    return s;
}

int cmd_report(const Opts& o, std::ostream& out) {
    const fs::path in_dir = o.in_path;
    const fs::path run_path = in_dir / "report.json";
    const fs::path bench_path = in_dir / "benchmark.json";
    const bool has_run = fs::exists(run_path);
    const bool has_bench = fs::exists(bench_path);
    if (!has_run && !has_bench)
        throw DataError("report: neither report.json nor benchmark.json under '" +
                        in_dir.string() + "'");

    std::string md = "# Flotation cell report\n";
    std::string sections;
    if (has_run) {
        md += render_run(load_json_file(run_path, "report"));
        sections = "run";
    }
    if (has_bench) {
        md += render_bench(load_json_file(bench_path, "report"));
        sections += sections.empty() ? "benchmark" : ", benchmark";
    }

    const fs::path dir = o.out_dir;
    fs::create_directories(dir);
    const fs::path md_path = dir / "report.md";
    std::ofstream md_out(md_path);
    if (!md_out) throw FormatError("report: cannot open '" + md_path.string() + "' for writing");
    md_out << md;
    if (!md_out) throw FormatError("report: failed writing '" + md_path.string() + "'");

    out << "report: wrote " << md_path.string() << " (" << sections << ")\n";
    return 0;
}

void add_preset_flags(CLI::App* cmd, Opts& o) {
    CLI::Option* config = cmd->add_option("--config", o.config, "configuration JSON file");
    cmd->add_option("--preset", o.preset, "built-in configuration (default desk)")
        ->check(CLI::IsMember({"desk", "cell1-paper", "cell2-paper"}))
        ->excludes(config);
    cmd->add_option("--seed", o.seed, "seed override");
}

} // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"froth flotation concentrate-grade models: simulation, training, benchmarks"};
    app.name("flotapinn");
    app.require_subcommand(1);

    Opts sim_o, pre_o, trn_o, ben_o, eva_o, rep_o;

    CLI::App* c_sim = app.add_subcommand(
        "simulate", "generate synthetic train/val/test splits and the ground-truth file");
    add_preset_flags(c_sim, sim_o);
    c_sim->add_option("-o,--out", sim_o.out_dir, "output directory (created if absent)")
        ->required();

    CLI::App* c_pre = app.add_subcommand(
        "preprocess", "IQR-filter one dataset CSV and emit column statistics");
    c_pre->add_option("--in", pre_o.in_path, "dataset CSV to filter")->required();
    c_pre->add_option("-o,--out", pre_o.out_dir, "output directory (created if absent)")
        ->required();

    CLI::App* c_trn = app.add_subcommand(
        "train", "train one model and write checkpoint, report, and test trace");
    add_preset_flags(c_trn, trn_o);
    c_trn->add_option("--in", trn_o.in_path,
                      "directory with train/val/test CSVs (SPLIT-filtered.csv preferred)");
    c_trn->add_option("-o,--out", trn_o.out_dir, "output directory (created if absent)")
        ->required();

    CLI::App* c_ben = app.add_subcommand(
        "benchmark", "train all seven model kinds on shared splits and tabulate metrics");
    add_preset_flags(c_ben, ben_o);
    c_ben->add_option("--in", ben_o.in_path,
                      "directory with train/val/test CSVs (SPLIT-filtered.csv preferred)");
    c_ben->add_option("-o,--out", ben_o.out_dir, "output directory (created if absent)")
        ->required();

    CLI::App* c_eva =
        app.add_subcommand("evaluate", "score a saved checkpoint against a dataset CSV");
    c_eva->add_option("--config", eva_o.config, "checkpoint JSON to evaluate")->required();
    c_eva->add_option("--in", eva_o.in_path, "dataset CSV to score")->required();
    c_eva->add_option("-o,--out", eva_o.out_dir, "optional directory for metrics.json and trace");

    CLI::App* c_rep = app.add_subcommand(
        "report", "render run/benchmark JSON artifacts into report.md");
    c_rep->add_option("--in", rep_o.in_path, "directory holding report.json/benchmark.json")
        ->required();
    c_rep->add_option("-o,--out", rep_o.out_dir, "output directory (created if absent)")
        ->required();

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("flotapinn");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    if (c_sim->parsed()) sim_o.seed_given = c_sim->count("--seed") > 0;
    if (c_trn->parsed()) trn_o.seed_given = c_trn->count("--seed") > 0;
    if (c_ben->parsed()) ben_o.seed_given = c_ben->count("--seed") > 0;

    try {
        if (c_sim->parsed()) return cmd_simulate(sim_o, out);
        if (c_pre->parsed()) return cmd_preprocess(pre_o, out);
        if (c_trn->parsed()) return cmd_train(trn_o, out);
        if (c_ben->parsed()) return cmd_benchmark(ben_o, out);
        if (c_eva->parsed()) return cmd_evaluate(eva_o, out);
        return cmd_report(rep_o, out);
    } catch (const UsageError& e) {
        err << "flotapinn: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "flotapinn: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "flotapinn: " << e.what() << '\n';
        return 1;
    }
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    args.reserve(argc > 0 ? static_cast<std::size_t>(argc) - 1 : 0);
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace flotapinn::cli
