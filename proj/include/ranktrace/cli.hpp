#pragma once

// Command-line front end. `run_cli` takes the arguments after the program
// name so that tests can drive every subcommand in-process.
//
// Exit codes: 0 success, 1 an oracle failed, 2 dataset parameters cannot be
// certified, 3 training diverged, 4 a recipe's rank expectation failed,
// 64 usage error.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ranktrace/datagen.hpp"
#include "ranktrace/dataset_io.hpp"
#include "ranktrace/netcore.hpp"
#include "ranktrace/noisekit.hpp"
#include "ranktrace/oracle.hpp"
#include "ranktrace/recipe.hpp"
#include "ranktrace/trainer.hpp"
#include "ranktrace/trajectory_csv.hpp"

#ifndef RANKTRACE_RECIPE_DIR
#define RANKTRACE_RECIPE_DIR "recipes"
#endif

namespace ranktrace {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int oracle_failed = 1;
inline constexpr int uncertifiable = 2;
inline constexpr int diverged = 3;
inline constexpr int recipe_failed = 4;
inline constexpr int usage = 64;
} // namespace exit_code

/// Injection points for harness self-tests (e.g. a deliberately broken rank bump).
struct CliHooks {
    RankBumpFn rank_bump = default_rank_bump;
};

namespace cli_detail {

inline std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline const char* flag(bool b) { return b ? "true" : "false"; }

inline void print_certificate(std::ostream& out, const AssumptionCertificate& c) {
    char gap[32];
    std::snprintf(gap, sizeof gap, "%.6e", c.min_singular_gap);
    out << "min_dim_ok " << flag(c.min_dim_ok) << "\n"
        << "sample_ok " << flag(c.sample_ok) << "\n"
        << "xx_full_rank " << flag(c.xx_full_rank) << "\n"
        << "yx_full_rank " << flag(c.yx_full_rank) << "\n"
        << "distinct_singulars " << flag(c.distinct_singulars) << "\n"
        << "min_singular_gap " << gap << "\n"
        << "certified " << flag(c.certified()) << "\n";
}

inline void emit(const std::string& path, const std::string& content, std::ostream& out) {
    if (path == "-" || path.empty()) {
        out << content;
        out.flush();
    } else {
        write_file_atomic(path, content);
    }
}

struct GenDataArgs {
    long long dx = 0;
    long long dy = 1;
    long long m = 0;
    std::uint64_t seed = 0;
    std::string out;
};

inline int gen_data(const GenDataArgs& a, std::ostream& out, std::ostream& err) {
    if (a.dx <= 0 || a.dy <= 0 || a.m <= 0) {
        err << "error: --dx, --dy and --m must be positive\n";
        return exit_code::usage;
    }
    Dataset d;
    try {
        d = synth_dataset(a.dx, a.dy, a.m, a.seed);
    } catch (const AssumptionViolated& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::uncertifiable;
    } catch (const GenerationFailed& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::uncertifiable;
    }
    print_certificate(out, verify_assumptions(d, LayerDims{d.input_dim(), d.output_dim()}));
    if (!a.out.empty()) {
        save_dataset(a.out, d);
        out << "wrote " << a.out << "\n";
    }
    return exit_code::ok;
}

struct TrainArgs {
    std::string data;
    std::string dims;
    std::string act = "linear";
    bool act_output = false;
    std::string noise = "none";
    double lr = 0.0;
    std::size_t iters = 1;
    std::size_t batch = 0;
    long long init_rank = -1;
    double init_gain = 0.0;
    std::uint64_t seed = 0;
    double rank_tol = 1e-9;
    std::string out = "-";
    bool gnuplot = false;
};

inline int train_cmd(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    const Dataset data = load_dataset(a.data);
    const LayerDims dims = LayerDims::parse(a.dims);
    if (dims.input() != data.input_dim() || dims.output() != data.output_dim()) {
        err << "error: --dims " << dims.to_string() << " does not match the dataset (" << data.input_dim() << " -> "
            << data.output_dim() << ")\n";
        return exit_code::usage;
    }
    const Activation act{Activation::parse_kind(a.act), a.act_output};
    const Eigen::Index r0 = a.init_rank >= 0 ? static_cast<Eigen::Index>(a.init_rank) : default_init_rank(dims);
    const double gain = a.init_gain > 0.0 ? a.init_gain : (r0 > 0 ? 1.0 / std::sqrt(static_cast<double>(r0)) : 1.0);
    const NetworkWeights init = low_rank_init(dims, r0, gain, a.seed);

    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.iterations = a.iters;
    cfg.batch_size = a.batch;
    cfg.noise = NoiseSpec::parse(a.noise);
    cfg.rank_tol = RankTolerance(a.rank_tol);
    cfg.record_layer_ranks = true;
    cfg.seed = a.seed;

    int code = exit_code::ok;
    RankTrajectory traj;
    try {
        traj = train(init, act, data, cfg).trajectory;
    } catch (const DivergenceError& e) {
        traj = e.partial();
        err << "error: " << e.what() << "\n";
        code = exit_code::diverged;
    }
    emit(a.out, trajectory_csv(traj, dims.depth()), out);
    if (a.gnuplot && a.out != "-") {
        write_file_atomic(a.out + ".gp", gnuplot_script(std::filesystem::path(a.out).filename().string(), dims.depth(),
                                                        dims.to_string() + " " + cfg.noise.to_string()));
    }
    return code;
}

struct VerifyArgs {
    std::string suite = "all";
    std::size_t trials = 200;
    std::size_t mc = 100000;
    std::size_t sgd_trials = 10000;
    std::uint64_t seed = 0;
};

} // namespace cli_detail

/// Runs the oracle checks of one suite (rank, noise, dropout, sgd, grad or all).
inline std::vector<OracleReport> run_oracle_suite(const std::string& suite, std::size_t trials, std::uint64_t seed,
                                                  std::size_t mc_samples, std::size_t sgd_trials,
                                                  const CliHooks& hooks = {}) {
    const bool all = suite == "all";
    if (!all && suite != "rank" && suite != "noise" && suite != "dropout" && suite != "sgd" && suite != "grad") {
        throw InvalidInput("unknown suite '" + suite + "'");
    }
    std::vector<OracleReport> reports;
    if (all || suite == "rank") {
        RngStream a(seed, 11);
        reports.push_back(check_rank_bump_lemmas(trials, a, hooks.rank_bump));
        RngStream b(seed, 12);
        reports.push_back(check_rank_lemmas(trials, 12, b, hooks.rank_bump));
    }
    if (all || suite == "noise") {
        RngStream r(seed, 21);
        reports.push_back(check_input_noise_identity(trials, r));
    }
    if (all || suite == "dropout") {
        RngStream r(seed, 31);
        reports.push_back(check_dropout_equivalence(mc_samples, r));
    }
    if (all || suite == "sgd") {
        RngStream setup(seed, 41);
        const LayerDims dims{6, 4, 3};
        const NetworkWeights w = detail::random_network(dims, setup);
        const Dataset d{setup.gaussian(6, 40), setup.gaussian(3, 40)};
        for (double delta : {0.1, 0.2}) {
            RngStream r(seed, 42 + static_cast<std::uint64_t>(delta * 100));
            reports.push_back(check_sgd_bound(w, d, 8, 0.05, delta, sgd_trials, r));
        }
    }
    if (all || suite == "grad") {
        RngStream r(seed, 51);
        reports.push_back(check_gradients(20, r));
    }
    return reports;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
                   const CliHooks& hooks = {}) {
    CLI::App app{"ranktrace: rank trajectories of noisy gradient descent on deep linear networks"};
    app.require_subcommand(1);

    cli_detail::GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a certified synthetic dataset");
    gen_cmd->add_option("--dx", gen.dx, "input dimension")->required();
    gen_cmd->add_option("--dy", gen.dy, "output dimension");
    gen_cmd->add_option("--m", gen.m, "number of samples")->required();
    gen_cmd->add_option("--seed", gen.seed, "random seed");
    gen_cmd->add_option("--out", gen.out, "dataset file to write");

    cli_detail::TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "train a network and write its rank trajectory as CSV");
    train_cmd->add_option("--data", tr.data, "dataset file")->required();
    train_cmd->add_option("--dims", tr.dims, "layer widths, e.g. 1000x500x250")->required();
    train_cmd->add_option("--act", tr.act, "linear | sigmoid | tanh");
    train_cmd->add_flag("--act-output", tr.act_output, "apply the activation at the output layer too");
    train_cmd->add_option("--noise", tr.noise, "none | grad:s | input:b | output:s | dropout-b:p | dropout-g:s");
    train_cmd->add_option("--lr", tr.lr, "learning rate")->required();
    train_cmd->add_option("--iters", tr.iters, "iterations");
    train_cmd->add_option("--batch", tr.batch, "mini-batch size (0 = full batch)");
    train_cmd->add_option("--init-rank", tr.init_rank, "rank of the initial layers (default 0.4 min(d_x, d_y))");
    train_cmd->add_option("--init-gain", tr.init_gain, "init gain (default 1/sqrt(init rank))");
    train_cmd->add_option("--seed", tr.seed, "seed for init, noise and batches");
    train_cmd->add_option("--rank-tol", tr.rank_tol, "relative numerical-rank threshold");
    train_cmd->add_option("--out", tr.out, "CSV file, '-' for stdout");
    train_cmd->add_flag("--gnuplot", tr.gnuplot, "also write <out>.gp");

    cli_detail::VerifyArgs ver;
    auto* verify_cmd = app.add_subcommand("verify", "run the numerical oracle suites");
    verify_cmd->add_option("--suite", ver.suite, "all | rank | noise | dropout | sgd | grad");
    verify_cmd->add_option("--trials", ver.trials, "trials per randomized check");
    verify_cmd->add_option("--mc", ver.mc, "Monte-Carlo samples for the dropout check");
    verify_cmd->add_option("--sgd-trials", ver.sgd_trials, "trials for the SGD bound check");
    verify_cmd->add_option("--seed", ver.seed, "random seed");

    std::string recipe_name;
    std::string recipe_config;
    std::string recipe_dir = RANKTRACE_RECIPE_DIR;
    std::string out_dir = ".";
    std::int64_t seed_override = -1;
    bool recipe_gnuplot = false;
    auto* recipe_cmd = app.add_subcommand("recipe", "run a named experiment recipe, one CSV per arm");
    recipe_cmd->add_option("name", recipe_name, "recipe name (fig1, fig2, fig3, fig4a, fig4b)");
    recipe_cmd->add_option("--config", recipe_config, "explicit recipe file");
    recipe_cmd->add_option("--config-dir", recipe_dir, "directory holding <name>.cfg");
    recipe_cmd->add_option("--out-dir", out_dir, "directory for CSV and log output");
    recipe_cmd->add_option("--seed", seed_override, "override data, init and train seeds");
    recipe_cmd->add_flag("--gnuplot", recipe_gnuplot, "also write a gnuplot script per arm");

    std::vector<const char*> argv{"ranktrace"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_code::ok : exit_code::usage;
    }

    try {
        if (gen_cmd->parsed()) {
            return cli_detail::gen_data(gen, out, err);
        }
        if (train_cmd->parsed()) {
            return cli_detail::train_cmd(tr, out, err);
        }
        if (verify_cmd->parsed()) {
            const auto reports = run_oracle_suite(ver.suite, ver.trials, ver.seed, ver.mc, ver.sgd_trials, hooks);
            bool pass = true;
            for (const auto& r : reports) {
                out << r.line() << "\n";
                pass = pass && r.pass;
            }
            return pass ? exit_code::ok : exit_code::oracle_failed;
        }
        if (recipe_cmd->parsed()) {
            if (recipe_config.empty() && recipe_name.empty()) {
                err << "error: recipe needs a name or --config\n";
                return exit_code::usage;
            }
            const std::filesystem::path path =
                recipe_config.empty() ? std::filesystem::path(recipe_dir) / (recipe_name + ".cfg") : std::filesystem::path(recipe_config);
            ExperimentRecipe recipe = ExperimentRecipe::load(path);
            if (seed_override >= 0) {
                const auto s = static_cast<std::uint64_t>(seed_override);
                recipe.data_seed = recipe.init_seed = recipe.train_seed = s;
            }
            const RecipeRun run = run_recipe(recipe);
            std::filesystem::create_directories(out_dir);
            std::string log = "recipe " + recipe.name + "\ndims " + recipe.dims.to_string() + "\ndata_checksum " +
                              cli_detail::hex64(run.data_checksum) + "\ninit_checksum " +
                              cli_detail::hex64(run.init_checksum) + "\n";
            for (const auto& arm : run.arms) {
                const std::string csv_name = recipe.name + "_" + arm.arm.name + ".csv";
                const auto csv_path = std::filesystem::path(out_dir) / csv_name;
                write_file_atomic(csv_path, trajectory_csv(arm.trajectory, recipe.dims.depth()));
                if (recipe_gnuplot) {
                    write_file_atomic(csv_path.string() + ".gp",
                                      gnuplot_script(csv_name, recipe.dims.depth(), recipe.name + " " + arm.arm.name));
                }
                log += "arm " + arm.arm.name + " noise " + arm.arm.noise.to_string() + " final_rank " +
                       std::to_string(arm.trajectory.final_rank());
                if (arm.diverged_at) log += " diverged_at " + std::to_string(*arm.diverged_at);
                log += arm.expect_label();
                log += arm.expectation_met ? " ok\n" : " FAILED\n";
            }
            write_file_atomic(std::filesystem::path(out_dir) / (recipe.name + ".log"), log);
            out << log;
            if (run.diverged()) return exit_code::diverged;
            return run.expectations_met() ? exit_code::ok : exit_code::recipe_failed;
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code::usage;
    }
    return exit_code::usage;
}

} // namespace ranktrace
