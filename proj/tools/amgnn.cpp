// amgnn: algebraic multigrid solver with a learned strong-threshold selector.
// One binary, subcommand style; every run is reproducible from the config
// seeds when timings come from the work-unit cost model.

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "amgnn/amg.hpp"
#include "amgnn/dataset.hpp"
#include "amgnn/errors.hpp"
#include "amgnn/eval.hpp"
#include "amgnn/nn.hpp"
#include "amgnn/pooling.hpp"
#include "amgnn/problems.hpp"
#include "amgnn/sparse.hpp"
#include "amgnn/tuner.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace amgnn;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    const std::string env = env_or("AMG_THREADS", "");
    if (!env.empty()) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
        throw ConfigError("AMG_THREADS must be a positive integer, got '" + env + "'");
    }
    return 1;
}

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

void check_keys(const json& j, const std::string& ctx, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
T get_or(const json& j, const std::string& ctx, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(ctx + ": field '" + std::string(key) + "' has the wrong type");
    }
}

struct RunConfig {
    SuiteConfig problems;
    TimingPolicy timing;
    CurveOptions curve;
    SplitSpec split;
    NetworkSpec network;
    TrainConfig train;
    AmgConfig amg;
    double default_theta = 0.5;
    double baseline_theta = 0.5;
    int threads = 0;
};

SuiteConfig parse_problems(const json& j) {
    check_keys(j, "config.problems",
               {"count", "p_values", "modes", "sizes", "cells", "eps_max", "renumberings",
                "seed"});
    SuiteConfig c;
    c.count = get_or(j, "config.problems", "count", c.count);
    c.p_values = get_or(j, "config.problems", "p_values", c.p_values);
    c.modes = get_or(j, "config.problems", "modes", c.modes);
    c.sizes = get_or(j, "config.problems", "sizes", c.sizes);
    c.cells = get_or(j, "config.problems", "cells", c.cells);
    c.eps_max = get_or(j, "config.problems", "eps_max", c.eps_max);
    c.renumberings = get_or(j, "config.problems", "renumberings", c.renumberings);
    c.seed = get_or(j, "config.problems", "seed", c.seed);
    c.validate();
    return c;
}

TimingPolicy parse_timing(const json& j) {
    check_keys(j, "config.timing", {"mode", "r_min", "r_max", "budget_seconds"});
    TimingPolicy p;
    p.mode = parse_timing_mode(get_or<std::string>(j, "config.timing", "mode",
                                                   timing_mode_name(p.mode)));
    p.r_min = get_or(j, "config.timing", "r_min", p.r_min);
    p.r_max = get_or(j, "config.timing", "r_max", p.r_max);
    p.budget_seconds = get_or(j, "config.timing", "budget_seconds", p.budget_seconds);
    p.validate();
    return p;
}

CurveOptions parse_curve(const json& j) {
    check_keys(j, "config.curve",
               {"m", "sg_window", "sg_degree", "review_threshold", "machine_tag"});
    CurveOptions c;
    c.m = get_or(j, "config.curve", "m", c.m);
    c.sg_window = get_or(j, "config.curve", "sg_window", c.sg_window);
    c.sg_degree = get_or(j, "config.curve", "sg_degree", c.sg_degree);
    c.review_threshold = get_or(j, "config.curve", "review_threshold", c.review_threshold);
    c.machine_tag = get_or(j, "config.curve", "machine_tag", c.machine_tag);
    if (c.m < 1) throw ConfigError("config.curve: m must be >= 1");
    return c;
}

SplitSpec parse_split(const json& j) {
    check_keys(j, "config.split", {"train_fraction", "val_fraction", "seed"});
    SplitSpec s;
    s.train_fraction = get_or(j, "config.split", "train_fraction", s.train_fraction);
    s.val_fraction = get_or(j, "config.split", "val_fraction", s.val_fraction);
    s.seed = get_or(j, "config.split", "seed", s.seed);
    return s;
}

NetworkSpec parse_network(const json& j) {
    check_keys(j, "config.network",
               {"m", "conv_blocks", "cnn_output_size", "dense_widths", "include_p"});
    NetworkSpec s;
    s.m = get_or(j, "config.network", "m", s.m);
    if (j.contains("conv_blocks")) {
        s.conv_blocks.clear();
        for (const json& b : j.at("conv_blocks")) {
            check_keys(b, "config.network.conv_blocks", {"filters", "layers", "kernel"});
            ConvBlockSpec cb;
            cb.filters = get_or(b, "config.network.conv_blocks", "filters", cb.filters);
            cb.layers = get_or(b, "config.network.conv_blocks", "layers", cb.layers);
            cb.kernel = get_or(b, "config.network.conv_blocks", "kernel", cb.kernel);
            s.conv_blocks.push_back(cb);
        }
    }
    s.cnn_output_size = get_or(j, "config.network", "cnn_output_size", s.cnn_output_size);
    s.dense_widths = get_or(j, "config.network", "dense_widths", s.dense_widths);
    s.include_p = get_or(j, "config.network", "include_p", s.include_p);
    s.validate();
    return s;
}

TrainConfig parse_train(const json& j) {
    check_keys(j, "config.train",
               {"lr", "batch", "plateau_patience", "plateau_factor", "max_epochs", "seed",
                "freeze_conv", "cache_conv_features"});
    TrainConfig c;
    c.lr = get_or(j, "config.train", "lr", c.lr);
    c.batch = get_or(j, "config.train", "batch", c.batch);
    c.plateau_patience = get_or(j, "config.train", "plateau_patience", c.plateau_patience);
    c.plateau_factor = get_or(j, "config.train", "plateau_factor", c.plateau_factor);
    c.max_epochs = get_or(j, "config.train", "max_epochs", c.max_epochs);
    c.seed = get_or(j, "config.train", "seed", c.seed);
    c.freeze_conv = get_or(j, "config.train", "freeze_conv", c.freeze_conv);
    c.cache_conv_features = get_or(j, "config.train", "cache_conv_features",
                                   c.cache_conv_features);
    c.validate();
    return c;
}

AmgConfig parse_amg(const json& j) {
    check_keys(j, "config.amg",
               {"theta", "nu1", "nu2", "n_max", "tol", "coarse_max", "max_levels", "smoother",
                "omega", "seed"});
    AmgConfig c;
    c.theta = get_or(j, "config.amg", "theta", c.theta);
    c.nu1 = get_or(j, "config.amg", "nu1", c.nu1);
    c.nu2 = get_or(j, "config.amg", "nu2", c.nu2);
    c.n_max = get_or(j, "config.amg", "n_max", c.n_max);
    c.tol = get_or(j, "config.amg", "tol", c.tol);
    c.coarse_max = get_or(j, "config.amg", "coarse_max", c.coarse_max);
    c.max_levels = get_or(j, "config.amg", "max_levels", c.max_levels);
    c.smoother.kind =
        parse_smoother(get_or<std::string>(j, "config.amg", "smoother",
                                           smoother_name(c.smoother.kind)));
    c.smoother.omega = get_or(j, "config.amg", "omega", c.smoother.omega);
    c.seed = get_or(j, "config.amg", "seed", c.seed);
    c.validate();
    return c;
}

RunConfig parse_config(const json& j) {
    check_keys(j, "config",
               {"problems", "timing", "curve", "split", "network", "train", "amg", "tuner",
                "threads"});
    RunConfig rc;
    if (j.contains("problems")) rc.problems = parse_problems(j.at("problems"));
    if (j.contains("timing")) rc.timing = parse_timing(j.at("timing"));
    if (j.contains("curve")) rc.curve = parse_curve(j.at("curve"));
    if (j.contains("split")) rc.split = parse_split(j.at("split"));
    if (j.contains("network")) rc.network = parse_network(j.at("network"));
    if (j.contains("train")) rc.train = parse_train(j.at("train"));
    if (j.contains("amg")) rc.amg = parse_amg(j.at("amg"));
    if (j.contains("tuner")) {
        const json& t = j.at("tuner");
        check_keys(t, "config.tuner", {"default_theta", "baseline_theta"});
        rc.default_theta = get_or(t, "config.tuner", "default_theta", rc.default_theta);
        rc.baseline_theta = get_or(t, "config.tuner", "baseline_theta", rc.baseline_theta);
    }
    rc.threads = get_or(j, "config", "threads", rc.threads);
    if (rc.threads < 0) throw ConfigError("config: threads must be >= 0");
    return rc;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_config(j);
}

RunConfig load_config_or_default(const std::string& path) {
    if (path.empty()) return RunConfig{};
    return load_config(path);
}

// ---------------------------------------------------------------------------
// Problem suite on disk: MatrixMarket files plus a JSON manifest
// ---------------------------------------------------------------------------

json instance_manifest(const ProblemInstance& inst, const std::string& matrix_file,
                       const std::string& rhs_file) {
    json j;
    j["base_problem_id"] = inst.base_problem_id;
    j["renumbering"] = inst.renumbering;
    j["renumbering_seed"] = inst.renumbering_seed;
    j["seed"] = inst.seed;
    j["p"] = inst.grid.p;
    j["cells_per_dim"] = inst.grid.cells_per_dim;
    j["mode"] = inst.diffusion.mode;
    j["size"] = inst.diffusion.size;
    j["eps_max"] = inst.diffusion.eps_max;
    j["eps"] = inst.diffusion.eps;
    j["n"] = inst.A.n_rows;
    j["matrix_file"] = matrix_file;
    j["rhs_file"] = rhs_file;
    return j;
}

ProblemInstance instance_from_manifest(const fs::path& dir, const json& j) {
    ProblemInstance inst;
    inst.base_problem_id = j.at("base_problem_id").get<int>();
    inst.renumbering = j.at("renumbering").get<std::string>();
    inst.renumbering_seed = j.at("renumbering_seed").get<std::uint64_t>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.grid.p = j.at("p").get<int>();
    inst.grid.cells_per_dim = j.at("cells_per_dim").get<int>();
    inst.diffusion.mode = j.at("mode").get<int>();
    inst.diffusion.size = j.at("size").get<int>();
    inst.diffusion.eps_max = j.at("eps_max").get<double>();
    inst.diffusion.eps = j.at("eps").get<std::vector<double>>();
    inst.A = read_matrix_market((dir / j.at("matrix_file").get<std::string>()).string());
    inst.f = read_vector_market((dir / j.at("rhs_file").get<std::string>()).string());
    if (static_cast<index_t>(inst.f.size()) != inst.A.n_rows)
        throw DimensionError("suite problem " + std::to_string(inst.base_problem_id) +
                             ": rhs length does not match the matrix");
    return inst;
}

json read_manifest(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) throw IoError("cannot open suite manifest '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("suite manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.contains("schema_version") || j.at("schema_version").get<int>() != 1)
        throw IoError("suite manifest '" + path.string() + "': unsupported schema version");
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failure on '" + path + "'");
}

std::string instance_stem(const ProblemInstance& inst) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "p%04d_", inst.base_problem_id);
    return std::string(buf) + inst.renumbering;
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

NetworkParams load_params(const std::string& checkpoint) {
    return load_checkpoint(checkpoint).params;
}

double resolve_sigma_bar(const std::string& calibration_path, double sigma_bar_flag,
                         bool sigma_bar_set) {
    if (sigma_bar_set) return sigma_bar_flag;
    if (calibration_path.empty())
        throw ConfigError("a calibration file (--calibration) or an explicit --sigma-bar is "
                          "required");
    std::ifstream in(calibration_path);
    if (!in) throw IoError("cannot open calibration file '" + calibration_path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("calibration file '" + calibration_path + "' is not valid JSON: " +
                      e.what());
    }
    if (!j.contains("sigma_bar"))
        throw IoError("calibration file '" + calibration_path + "' has no sigma_bar field");
    return j.at("sigma_bar").get<double>();
}

json stats_to_json(const SolveStats& stats) {
    json j;
    j["iterations"] = stats.iterations;
    j["converged"] = stats.converged;
    j["rho"] = stats.rho;
    j["final_residual"] = stats.residual_history.empty() ? 0.0 : stats.residual_history.back();
    j["residual_history"] = stats.residual_history;
    j["level_sizes"] = stats.level_sizes;
    j["level_nnz"] = stats.level_nnz;
    j["operator_complexity"] = stats.operator_complexity;
    j["work_units"] = stats.work_units;
    j["setup_seconds"] = stats.setup_seconds;
    j["wall_seconds"] = stats.wall_seconds;
    return j;
}

void emit(const json& j, const std::string& out_path) {
    if (out_path.empty())
        std::cout << j.dump(2) << "\n";
    else
        write_json_file(out_path, j);
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void cmd_gen_problems(const std::string& config_path, const std::string& out_dir,
                      int threads_flag) {
    const RunConfig rc = load_config(config_path);
    const int threads = resolve_threads(threads_flag > 0 ? threads_flag : rc.threads);
    fs::create_directories(out_dir);

    std::vector<std::vector<ProblemInstance>> per_base(
        static_cast<std::size_t>(rc.problems.count));
    parallel_for(per_base.size(), threads,
                 [&](std::size_t b) { per_base[b] = generate_base(rc.problems, static_cast<int>(b)); });

    json manifest;
    manifest["schema_version"] = 1;
    manifest["suite"] = {{"count", rc.problems.count},
                         {"p_values", rc.problems.p_values},
                         {"modes", rc.problems.modes},
                         {"sizes", rc.problems.sizes},
                         {"cells", rc.problems.cells},
                         {"eps_max", rc.problems.eps_max},
                         {"renumberings", rc.problems.renumberings},
                         {"seed", rc.problems.seed}};
    manifest["problems"] = json::array();

    std::size_t files = 0;
    for (const std::vector<ProblemInstance>& group : per_base) {
        for (const ProblemInstance& inst : group) {
            const std::string stem = instance_stem(inst);
            const std::string matrix_file = stem + ".mtx";
            const std::string rhs_file = stem + "_rhs.mtx";
            write_matrix_market((fs::path(out_dir) / matrix_file).string(), inst.A);
            write_vector_market((fs::path(out_dir) / rhs_file).string(), inst.f);
            manifest["problems"].push_back(instance_manifest(inst, matrix_file, rhs_file));
            files += 2;
        }
    }
    write_json_file((fs::path(out_dir) / "manifest.json").string(), manifest);

    json summary;
    summary["suite_dir"] = out_dir;
    summary["problems"] = manifest["problems"].size();
    summary["files_written"] = files + 1;
    std::cout << summary.dump(2) << "\n";
}

void cmd_collect(const std::string& config_path, const std::string& suite_dir,
                 const std::string& out_path, int threads_flag) {
    const RunConfig rc = load_config(config_path);
    CurveOptions opts = rc.curve;
    opts.machine_tag = env_or("AMG_MACHINE_TAG", opts.machine_tag);
    if (rc.timing.mode == TimingMode::wallclock && opts.machine_tag.empty())
        throw ConfigError("wallclock timing needs a machine tag: set AMG_MACHINE_TAG or "
                          "config.curve.machine_tag");

    const json manifest = read_manifest(suite_dir);
    const json& problems = manifest.at("problems");
    std::vector<ProblemCurve> curves(problems.size());

    // Wallclock timings would contend for the cores, so that mode runs serial.
    const int threads = rc.timing.mode == TimingMode::cost_model
                            ? resolve_threads(threads_flag > 0 ? threads_flag : rc.threads)
                            : 1;
    parallel_for(problems.size(), threads, [&](std::size_t i) {
        const ProblemInstance inst = instance_from_manifest(suite_dir, problems[i]);
        curves[i] = build_curve(inst, rc.amg, rc.timing, opts);
    });

    write_dataset(out_path, curves);
    json summary;
    summary["dataset"] = out_path;
    summary["curves"] = curves.size();
    std::size_t flagged = 0;
    for (const ProblemCurve& c : curves) flagged += c.review_flag ? 1 : 0;
    summary["review_flagged"] = flagged;
    std::cout << summary.dump(2) << "\n";
}

std::vector<ProblemCurve> drop_review_flagged(const std::vector<ProblemCurve>& curves) {
    std::vector<ProblemCurve> out;
    out.reserve(curves.size());
    for (const ProblemCurve& c : curves)
        if (!c.review_flag) out.push_back(c);
    return out;
}

void cmd_train(const std::string& config_path, const std::string& dataset_path,
               const std::string& out_path, const std::string& history_path,
               const std::string& init_from, bool freeze_conv, bool include_review) {
    const RunConfig rc = load_config(config_path);
    TrainConfig cfg = rc.train;
    if (freeze_conv) cfg.freeze_conv = true;

    const std::vector<ProblemCurve> curves = read_dataset(dataset_path);
    DatasetSplit split = split_dataset(curves, rc.split);
    if (!include_review) {
        split.train = drop_review_flagged(split.train);
        split.val = drop_review_flagged(split.val);
    }
    if (split.train.empty() || split.val.empty())
        throw ConfigError("train: empty train or validation split (dataset has " +
                          std::to_string(curves.size()) + " curves)");

    NetworkParams init = init_from.empty() ? init_for_training(rc.network, cfg.seed)
                                           : load_params(init_from);
    const TrainResult result = train(split.train, split.val, init, cfg);

    std::map<std::string, std::string> metadata;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", result.best_val_loss);
    metadata["best_val_loss"] = buf;
    metadata["epochs"] = std::to_string(result.history.size());
    metadata["freeze_conv"] = cfg.freeze_conv ? "true" : "false";
    metadata["dataset"] = dataset_path;
    if (!init_from.empty()) metadata["init_from"] = init_from;
    const std::string tag = env_or("AMG_MACHINE_TAG", "");
    if (!tag.empty()) metadata["machine_tag"] = tag;
    save_checkpoint(out_path, result.params, metadata);
    if (!history_path.empty()) write_history_csv(history_path, result.history);

    json summary;
    summary["checkpoint"] = out_path;
    summary["best_val_loss"] = result.best_val_loss;
    summary["epochs"] = result.history.size();
    summary["final_lr"] = result.history.empty() ? cfg.lr : result.history.back().lr;
    summary["parameters"] = result.params.parameter_count();
    summary["train_curves"] = split.train.size();
    summary["val_curves"] = split.val.size();
    std::cout << summary.dump(2) << "\n";
}

void cmd_calibrate(const std::string& config_path, const std::string& dataset_path,
                   const std::string& checkpoint, const std::string& out_path) {
    const RunConfig rc = load_config(config_path);
    const NetworkParams params = load_params(checkpoint);

    const std::vector<ProblemCurve> curves = read_dataset(dataset_path);
    const DatasetSplit split = split_dataset(curves, rc.split);
    if (split.val.empty()) throw ConfigError("calibrate: validation split is empty");

    std::vector<double> scores;
    scores.reserve(split.val.size());
    for (const ProblemCurve& c : split.val)
        scores.push_back(sigma_hat_score(
            predict_curve(params, c.v_hat, static_cast<double>(c.p), c.log2_n1)));

    const CalibrationResult cal = calibrate_sigma_bar(scores);
    json j;
    j["schema_version"] = 1;
    j["sigma_bar"] = cal.sigma_bar;
    j["elbow_index"] = cal.elbow_index;
    j["count"] = cal.sigma_sorted.size();
    j["sigma_sorted"] = cal.sigma_sorted;
    j["checkpoint"] = checkpoint;
    emit(j, out_path);
    if (!out_path.empty()) {
        json summary;
        summary["calibration"] = out_path;
        summary["sigma_bar"] = cal.sigma_bar;
        std::cout << summary.dump(2) << "\n";
    }
}

void cmd_tune(const std::string& matrix_path, const std::string& checkpoint,
              const std::string& calibration, double sigma_bar_flag, bool sigma_bar_set,
              double default_theta, int p, const std::string& out_path,
              const std::string& curve_csv) {
    const CsrMatrix a = read_matrix_market(matrix_path);
    const NetworkParams params = load_params(checkpoint);
    const double sigma_bar = resolve_sigma_bar(calibration, sigma_bar_flag, sigma_bar_set);

    const TuneResult r = tune_theta(a, params, sigma_bar, default_theta,
                                    static_cast<double>(p));
    if (!curve_csv.empty()) write_curve_csv(curve_csv, r.curve);

    json j = json::parse(tune_result_to_json(r));
    j["matrix"] = matrix_path;
    j["n"] = a.n_rows;
    j["nnz"] = a.nnz();
    emit(j, out_path);
}

void cmd_solve(const std::string& config_path, const std::string& matrix_path,
               const std::string& rhs_path, double theta, bool theta_set, bool auto_tune,
               const std::string& checkpoint, const std::string& calibration,
               double sigma_bar_flag, bool sigma_bar_set, double default_theta, int p,
               const std::string& out_path, const std::string& stats_path) {
    const RunConfig rc = load_config_or_default(config_path);
    const CsrMatrix a = read_matrix_market(matrix_path);
    const std::vector<double> f =
        rhs_path.empty() ? std::vector<double>(a.n_rows, 1.0) : read_vector_market(rhs_path);

    AmgConfig cfg = rc.amg;
    json j;
    SolveResult result;
    if (auto_tune) {
        if (checkpoint.empty())
            throw ConfigError("solve --auto needs --checkpoint (and a calibration source)");
        const NetworkParams params = load_params(checkpoint);
        const double sigma_bar = resolve_sigma_bar(calibration, sigma_bar_flag, sigma_bar_set);
        const AnnSolveResult ann = ann_amg_solve(a, f, cfg, params, sigma_bar, default_theta,
                                                 static_cast<double>(p));
        result = ann.solve;
        j["theta"] = ann.tune.theta_star;
        j["tune"] = {{"theta_star", ann.tune.theta_star},
                     {"sigma_hat", ann.tune.sigma_hat},
                     {"sigma_bar", ann.tune.sigma_bar},
                     {"used_default", ann.tune.used_default},
                     {"tune_seconds", ann.tune_seconds}};
    } else {
        if (theta_set) cfg.theta = theta;
        cfg.validate();
        result = amg_solve(a, f, cfg);
        j["theta"] = cfg.theta;
    }

    j["matrix"] = matrix_path;
    j["n"] = a.n_rows;
    j["nnz"] = a.nnz();
    j["stats"] = stats_to_json(result.stats);
    if (!out_path.empty()) write_vector_market(out_path, result.u);
    emit(j, stats_path);
    if (!stats_path.empty()) {
        json summary;
        summary["converged"] = result.stats.converged;
        summary["iterations"] = result.stats.iterations;
        std::cout << summary.dump(2) << "\n";
    }
}

void cmd_eval(const std::string& config_path, const std::string& dataset_path,
              const std::string& suite_dir, const std::string& checkpoint,
              const std::string& calibration, double sigma_bar_flag, bool sigma_bar_set,
              const std::string& out_path, const std::string& csv_path, int threads_flag) {
    const RunConfig rc = load_config(config_path);
    const NetworkParams params = load_params(checkpoint);
    const double sigma_bar = resolve_sigma_bar(calibration, sigma_bar_flag, sigma_bar_set);

    const std::vector<ProblemCurve> curves = read_dataset(dataset_path);
    const DatasetSplit split = split_dataset(curves, rc.split);
    if (split.test.empty()) throw ConfigError("eval: test split is empty");

    const json manifest = read_manifest(suite_dir);
    std::map<std::pair<int, std::string>, const json*> by_id;
    for (const json& pj : manifest.at("problems"))
        by_id[{pj.at("base_problem_id").get<int>(), pj.at("renumbering").get<std::string>()}] =
            &pj;

    const std::vector<double> grid = theta_grid37();
    std::size_t base_idx = grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (std::abs(grid[i] - rc.baseline_theta) < 1e-12) base_idx = i;
    if (base_idx == grid.size())
        throw ConfigError("eval: baseline theta must lie on the sweep grid");

    const int threads = rc.timing.mode == TimingMode::cost_model
                            ? resolve_threads(threads_flag > 0 ? threads_flag : rc.threads)
                            : 1;
    std::vector<PerfRecord> records(split.test.size());
    parallel_for(split.test.size(), threads, [&](std::size_t i) {
        const ProblemCurve& c = split.test[i];
        const auto it = by_id.find({c.base_problem_id, c.renumbering});
        if (it == by_id.end())
            throw ConfigError("eval: problem " + std::to_string(c.base_problem_id) + " (" +
                              c.renumbering + ") is missing from the suite manifest");

        const TuneResult tr = select_theta(
            predict_curve(params, c.v_hat, static_cast<double>(c.p), c.log2_n1), sigma_bar,
            rc.default_theta);

        std::size_t min_idx = 0;
        for (std::size_t k = 1; k < c.t_raw_mean.size(); ++k)
            if (c.t_raw_mean[k] < c.t_raw_mean[min_idx]) min_idx = k;

        const ProblemInstance inst = instance_from_manifest(suite_dir, *it->second);
        AmgConfig cfg = rc.amg;
        cfg.theta = tr.theta_star;
        const PointMeasurement ann = measure_point(inst, cfg, rc.timing);

        records[i] = perf_indices(c.base_problem_id, c.renumbering, tr.theta_star,
                                  grid[min_idx], tr.used_default, ann.t,
                                  c.t_raw_mean[base_idx], c.t_raw_mean[min_idx]);
    });

    const EvalSummary summary = aggregate(records, rc.baseline_theta);
    if (!csv_path.empty()) write_records_csv(csv_path, records);
    json j = json::parse(summary_to_json(summary));
    j["dataset"] = dataset_path;
    j["checkpoint"] = checkpoint;
    j["sigma_bar"] = sigma_bar;
    emit(j, out_path);
}

void cmd_export_plots(const std::string& dataset_path, const std::string& out_dir) {
    const std::vector<ProblemCurve> curves = read_dataset(dataset_path);
    fs::create_directories(out_dir);

    std::ofstream index((fs::path(out_dir) / "index.csv").string());
    if (!index) throw IoError("cannot open plot index for writing in '" + out_dir + "'");
    index << "file,base_problem_id,renumbering,p,log2_n1,timing_mode,machine_tag,review_flag\n";

    char buf[160];
    for (const ProblemCurve& c : curves) {
        std::snprintf(buf, sizeof buf, "curve_p%04d_%s.csv", c.base_problem_id,
                      c.renumbering.c_str());
        const std::string name = buf;
        std::ofstream out((fs::path(out_dir) / name).string());
        if (!out) throw IoError("cannot open '" + name + "' for writing");
        out << "theta,t_raw_mean,t_smoothed,t_normalized,capped,repetitions\n";
        for (std::size_t i = 0; i < c.theta_grid.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d,%d\n", c.theta_grid[i],
                          c.t_raw_mean[i], c.t_smoothed[i], c.t_normalized[i],
                          static_cast<int>(c.capped[i]), c.repetitions[i]);
            out << buf;
        }
        if (!out) throw IoError("write failure on '" + name + "'");
        index << name << "," << c.base_problem_id << "," << c.renumbering << "," << c.p << ","
              << c.log2_n1 << "," << c.timing_mode << "," << c.machine_tag << ","
              << (c.review_flag ? 1 : 0) << "\n";
    }
    if (!index) throw IoError("write failure on the plot index");

    json summary;
    summary["out_dir"] = out_dir;
    summary["curves"] = curves.size();
    std::cout << summary.dump(2) << "\n";
}

const char* error_type_name(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
    if (dynamic_cast<const DimensionError*>(&e)) return "DimensionError";
    if (dynamic_cast<const StructureError*>(&e)) return "StructureError";
    if (dynamic_cast<const NumericalError*>(&e)) return "NumericalError";
    if (dynamic_cast<const IoError*>(&e)) return "IoError";
    return "Error";
}

int fail_json(const std::string& type, const std::string& message, int code) {
    json j;
    j["error"] = {{"type", type}, {"message", message}};
    std::cerr << j.dump() << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Algebraic multigrid solver with a learned strong-threshold selector"};
    app.require_subcommand(1);

    // gen-problems
    auto* gen = app.add_subcommand("gen-problems", "Generate a diffusion problem suite");
    std::string gen_config, gen_out;
    int gen_threads = 0;
    gen->add_option("--config", gen_config, "Run config JSON")->required();
    gen->add_option("--out", gen_out, "Output suite directory")->required();
    gen->add_option("--threads", gen_threads, "Worker threads (0 = AMG_THREADS or 1)");
    gen->callback([&] { cmd_gen_problems(gen_config, gen_out, gen_threads); });

    // collect
    auto* col = app.add_subcommand("collect", "Sweep theta on a suite and build a dataset");
    std::string col_config, col_suite, col_out;
    int col_threads = 0;
    col->add_option("--config", col_config, "Run config JSON")->required();
    col->add_option("--suite", col_suite, "Problem suite directory")->required();
    col->add_option("--out", col_out, "Output dataset (JSON lines)")->required();
    col->add_option("--threads", col_threads, "Worker threads (cost_model only)");
    col->callback([&] { cmd_collect(col_config, col_suite, col_out, col_threads); });

    // train
    auto* trn = app.add_subcommand("train", "Train the cost regressor on a dataset");
    std::string trn_config, trn_dataset, trn_out, trn_history, trn_init;
    bool trn_freeze = false, trn_include_review = false;
    trn->add_option("--config", trn_config, "Run config JSON")->required();
    trn->add_option("--dataset", trn_dataset, "Dataset JSON lines file")->required();
    trn->add_option("--out", trn_out, "Output checkpoint path")->required();
    trn->add_option("--history", trn_history, "Optional training history CSV");
    trn->add_option("--init-from", trn_init, "Warm-start checkpoint");
    trn->add_flag("--freeze-conv", trn_freeze, "Keep convolutional weights fixed");
    trn->add_flag("--include-review-flagged", trn_include_review,
                  "Keep curves flagged for review in the train/val splits");
    trn->callback([&] {
        cmd_train(trn_config, trn_dataset, trn_out, trn_history, trn_init, trn_freeze,
                  trn_include_review);
    });

    // calibrate
    auto* cal = app.add_subcommand("calibrate",
                                   "Pick the confidence threshold from the validation split");
    std::string cal_config, cal_dataset, cal_ckpt, cal_out;
    cal->add_option("--config", cal_config, "Run config JSON")->required();
    cal->add_option("--dataset", cal_dataset, "Dataset JSON lines file")->required();
    cal->add_option("--checkpoint", cal_ckpt, "Trained checkpoint")->required();
    cal->add_option("--out", cal_out, "Calibration JSON (default stdout)");
    cal->callback([&] { cmd_calibrate(cal_config, cal_dataset, cal_ckpt, cal_out); });

    // tune
    auto* tun = app.add_subcommand("tune", "Predict the strong threshold for a matrix");
    std::string tun_matrix, tun_ckpt, tun_calib, tun_out, tun_csv;
    double tun_sigma_bar = 0.0, tun_default_theta = 0.5;
    int tun_p = 1;
    tun->add_option("--matrix", tun_matrix, "MatrixMarket file")->required();
    tun->add_option("--checkpoint", tun_ckpt, "Trained checkpoint")->required();
    tun->add_option("--calibration", tun_calib, "Calibration JSON from `calibrate`");
    auto* tun_sb = tun->add_option("--sigma-bar", tun_sigma_bar, "Confidence threshold override");
    tun->add_option("--default-theta", tun_default_theta, "Fallback theta")
        ->capture_default_str();
    tun->add_option("--p", tun_p, "Element order scalar fed to the network")
        ->capture_default_str();
    tun->add_option("--out", tun_out, "Result JSON (default stdout)");
    tun->add_option("--curve-csv", tun_csv, "Write the 181-point predicted curve as CSV");
    tun->callback([&] {
        cmd_tune(tun_matrix, tun_ckpt, tun_calib, tun_sigma_bar, tun_sb->count() > 0,
                 tun_default_theta, tun_p, tun_out, tun_csv);
    });

    // solve
    auto* sol = app.add_subcommand("solve", "Solve a linear system with AMG");
    std::string sol_config, sol_matrix, sol_rhs, sol_ckpt, sol_calib, sol_out, sol_stats;
    double sol_theta = 0.5, sol_sigma_bar = 0.0, sol_default_theta = 0.5;
    bool sol_auto = false;
    int sol_p = 1;
    sol->add_option("--config", sol_config, "Run config JSON (optional)");
    sol->add_option("--matrix", sol_matrix, "MatrixMarket file")->required();
    sol->add_option("--rhs", sol_rhs, "Right-hand side (MatrixMarket vector; default all ones)");
    auto* sol_th = sol->add_option("--theta", sol_theta, "Fixed strong threshold");
    sol->add_flag("--auto", sol_auto, "Pick theta with the trained selector");
    sol->add_option("--checkpoint", sol_ckpt, "Trained checkpoint (with --auto)");
    sol->add_option("--calibration", sol_calib, "Calibration JSON (with --auto)");
    auto* sol_sb = sol->add_option("--sigma-bar", sol_sigma_bar, "Confidence threshold override");
    sol->add_option("--default-theta", sol_default_theta, "Fallback theta (with --auto)")
        ->capture_default_str();
    sol->add_option("--p", sol_p, "Element order scalar fed to the network")
        ->capture_default_str();
    sol->add_option("--out", sol_out, "Write the solution vector here");
    sol->add_option("--stats", sol_stats, "Stats JSON (default stdout)");
    sol_th->excludes("--auto");
    sol->callback([&] {
        cmd_solve(sol_config, sol_matrix, sol_rhs, sol_theta, sol_th->count() > 0, sol_auto,
                  sol_ckpt, sol_calib, sol_sigma_bar, sol_sb->count() > 0, sol_default_theta,
                  sol_p, sol_out, sol_stats);
    });

    // eval
    auto* evl = app.add_subcommand("eval", "Score the selector on the test split");
    std::string evl_config, evl_dataset, evl_suite, evl_ckpt, evl_calib, evl_out, evl_csv;
    double evl_sigma_bar = 0.0;
    int evl_threads = 0;
    evl->add_option("--config", evl_config, "Run config JSON")->required();
    evl->add_option("--dataset", evl_dataset, "Dataset JSON lines file")->required();
    evl->add_option("--suite", evl_suite, "Problem suite directory")->required();
    evl->add_option("--checkpoint", evl_ckpt, "Trained checkpoint")->required();
    evl->add_option("--calibration", evl_calib, "Calibration JSON");
    auto* evl_sb = evl->add_option("--sigma-bar", evl_sigma_bar, "Confidence threshold override");
    evl->add_option("--out", evl_out, "Report JSON (default stdout)");
    evl->add_option("--csv", evl_csv, "Per-problem records CSV");
    evl->add_option("--threads", evl_threads, "Worker threads (cost_model only)");
    evl->callback([&] {
        cmd_eval(evl_config, evl_dataset, evl_suite, evl_ckpt, evl_calib, evl_sigma_bar,
                 evl_sb->count() > 0, evl_out, evl_csv, evl_threads);
    });

    // export-plots
    auto* exp = app.add_subcommand("export-plots", "Export dataset curves as CSV files");
    std::string exp_dataset, exp_out;
    exp->add_option("--dataset", exp_dataset, "Dataset JSON lines file")->required();
    exp->add_option("--out-dir", exp_out, "Output directory")->required();
    exp->callback([&] { cmd_export_plots(exp_dataset, exp_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        return fail_json("UsageError", e.what(), e.get_exit_code());
    } catch (const Error& e) {
        return fail_json(error_type_name(e), e.what(), 1);
    } catch (const std::exception& e) {
        return fail_json("InternalError", e.what(), 1);
    }
    return 0;
}
