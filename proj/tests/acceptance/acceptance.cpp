// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset, e.g. `acceptance 4 5 6`.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ranktrace/cli.hpp"
#include "ranktrace/ranktrace.hpp"

using namespace ranktrace;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

ExperimentRecipe load_recipe(const std::string& name) {
    return ExperimentRecipe::load(fs::path(RANKTRACE_RECIPE_DIR) / (name + ".cfg"));
}

const ArmResult* find_arm(const RecipeRun& run, const std::string& name) {
    for (const auto& a : run.arms) {
        if (a.arm.name == name) return &a;
    }
    return nullptr;
}

Outcome fig1_recipe() {
    const auto t0 = Clock::now();
    const ExperimentRecipe recipe = load_recipe("fig1");
    const RecipeRun run = run_recipe(recipe);
    const double secs = seconds_since(t0);
    const ArmResult* gd = find_arm(run, "gd");
    const ArmResult* pgd = find_arm(run, "pgd");
    if (!gd || !pgd) return {false, "fig1 recipe lacks gd/pgd arms"};
    const auto& recs = pgd->trajectory.records;
    std::size_t first_full = 0;
    for (const auto& r : recs) {
        if (r.rank_product == 250) {
            first_full = r.iteration;
            break;
        }
    }
    const bool reached = !pgd->diverged_at && recs.size() == 51 && pgd->trajectory.final_rank() == 250;
    const bool gd_below = !gd->diverged_at && gd->trajectory.final_rank() < 250;
    const bool fast = secs < 300.0;
    return {reached && gd_below && fast,
            "pgd final rank " + std::to_string(pgd->trajectory.final_rank()) + " (first full at iter " +
                std::to_string(first_full) + "), gd final rank " + std::to_string(gd->trajectory.final_rank()) +
                ", " + fmt("%.1fs", secs)};
}

Outcome deep_and_tanh_recipes() {
    bool all = true;
    std::string detail;
    for (const char* name : {"fig3", "fig4a", "fig4b"}) {
        const auto t0 = Clock::now();
        ExperimentRecipe recipe = load_recipe(name);
        std::erase_if(recipe.arms, [](const ArmSpec& a) { return a.noise.mode == NoiseMode::none; });
        const RecipeRun run = run_recipe(recipe);
        const double secs = seconds_since(t0);
        const ArmResult& arm = run.arms.front();
        const bool ok = !arm.diverged_at && arm.trajectory.final_rank() == 100 && secs < 600.0;
        all = all && ok;
        detail += std::string(detail.empty() ? "" : "; ") + name + " rank " +
                  std::to_string(arm.trajectory.final_rank()) + " " + fmt("%.1fs", secs);
    }
    return {all, detail};
}

Outcome rank_monotonicity() {
    const ExperimentRecipe base = load_recipe("fig1");
    int passed = 0;
    int worst_dips = 0;
    std::string failures;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        ExperimentRecipe r = base;
        r.data_seed = r.init_seed = r.train_seed = seed;
        r.layer_ranks = false;
        std::erase_if(r.arms, [](const ArmSpec& a) { return a.noise.mode == NoiseMode::none; });
        const RecipeRun run = run_recipe(r);
        const ArmResult& arm = run.arms.front();
        const RankMonotonicity m = check_rank_monotone(arm.trajectory, r.expected_final_rank);
        worst_dips = std::max(worst_dips, m.dips);
        if (m.ok && !arm.diverged_at) {
            ++passed;
        } else {
            failures += " seed" + std::to_string(seed) + "(final " + std::to_string(arm.trajectory.final_rank()) +
                        ", dips " + std::to_string(m.dips) + ")";
        }
    }
    return {passed == 20, std::to_string(passed) + "/20 seeds monotone and full, max dips " +
                              std::to_string(worst_dips) + failures};
}

Outcome optimality_gap() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dataset d = synth_dataset(30, 10, 100, seed);
        const LayerDims dims{30, 20, 10};
        const NetworkWeights w0 = low_rank_init(dims, default_init_rank(dims), 0.5, seed);
        TrainConfig cfg;
        cfg.learning_rate = 1e-3;
        cfg.iterations = 2000;
        cfg.noise = NoiseSpec::gradient(1e-3);
        cfg.seed = seed;
        const TrainResult res = train(w0, Activation{}, d, cfg);
        const double opt = optimal_loss(d);
        worst = std::max(worst, (res.trajectory.records.back().loss - opt) / opt);
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-3 && secs < 30.0,
            "worst relative gap " + fmt("%.3e", worst) + " over 5 instances, " + fmt("%.1fs", secs)};
}

Outcome from_report(const OracleReport& r) { return {r.pass, r.line()}; }

Outcome bump_oracle() {
    RngStream rng(2024, 1);
    return from_report(check_rank_bump_lemmas(200, rng));
}

Outcome rank_lemma_oracle() {
    RngStream rng(2024, 2);
    return from_report(check_rank_lemmas(500, 12, rng));
}

Outcome input_noise_oracle() {
    RngStream rng(2024, 3);
    return from_report(check_input_noise_identity(200, rng));
}

Outcome dropout_oracle() {
    RngStream rng(2024, 4);
    DropoutEquivalence e;
    const OracleReport r = check_dropout_equivalence(100000, rng, 0.5, &e);
    const double z_drop = std::abs(e.mc_dropout.mean - e.closed_dropout) / e.mc_dropout.standard_error;
    const double z_input = std::abs(e.mc_input.mean - e.closed_input) / e.mc_input.standard_error;
    return {r.pass, r.line() + " | closed forms " + fmt("%.12g", e.closed_dropout) + " vs " +
                        fmt("%.12g", e.closed_input) + ", MC z-scores " + fmt("%.2f", z_drop) + " / " +
                        fmt("%.2f", z_input)};
}

Outcome sgd_oracle() {
    const std::vector<OracleReport> reports = run_oracle_suite("sgd", 0, 2024, 0, 10000);
    bool pass = true;
    std::string detail;
    for (const auto& r : reports) {
        pass = pass && r.pass;
        detail += (detail.empty() ? "" : "; ") + r.line();
    }
    return {pass, detail};
}

Outcome gradient_oracle() {
    RngStream rng(2024, 5);
    return from_report(check_gradients(20, rng));
}

struct Captured {
    int code;
    std::string out;
};

Captured run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str()};
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "ranktrace_acceptance_determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string cfg = (root / "det.cfg").string();
    write_file_atomic(cfg, "version = 1\nname = det\ndims = 40x30x20\ndata.m = 80\ndata.seed = 3\n"
                           "init.rank = 4\ntrain.lr = 1e-3\ntrain.iters = 25\ntrain.batch = 16\narms = a,b\n"
                           "arm.a.noise = grad:1e-2\narm.b.noise = dropout-g:0.3\nexpected_final_rank = 20\n");
    bool same = true;
    std::string detail;
    auto compare = [&](const std::string& what, const std::string& a, const std::string& b) {
        if (a != b) {
            same = false;
            detail += " " + what + " differs;";
        }
    };
    std::vector<std::string> outputs[2];
    for (int rep = 0; rep < 2; ++rep) {
        const fs::path dir = root / "work";
        fs::remove_all(dir);
        fs::create_directories(dir);
        const std::string data = (dir / "d.bin").string();
        auto& o = outputs[rep];
        o.push_back(run({"gen-data", "--dx", "40", "--dy", "20", "--m", "80", "--seed", "3", "--out", data}).out);
        o.push_back(read_file(data));
        o.push_back(run({"train", "--data", data, "--dims", "40x30x20", "--lr", "1e-3", "--iters", "25", "--noise",
                         "grad:1e-2", "--seed", "3"})
                        .out);
        o.push_back(run({"train", "--data", data, "--dims", "40x30x20", "--act", "tanh", "--lr", "1e-3", "--iters",
                         "10", "--noise", "input:0.1", "--batch", "20", "--seed", "3"})
                        .out);
        o.push_back(run({"verify", "--suite", "all", "--trials", "50", "--mc", "5000", "--sgd-trials", "1000",
                         "--seed", "3"})
                        .out);
        o.push_back(run({"recipe", "--config", cfg, "--out-dir", (dir / "r").string()}).out);
        o.push_back(read_file(dir / "r" / "det_a.csv"));
        o.push_back(read_file(dir / "r" / "det_b.csv"));
    }
    const char* names[] = {"gen-data report", "dataset bytes", "train csv", "tanh train csv",
                           "verify report", "recipe log", "recipe csv a", "recipe csv b"};
    for (std::size_t i = 0; i < outputs[0].size(); ++i) compare(names[i], outputs[0][i], outputs[1][i]);
    fs::remove_all(root);
    return {same, same ? std::to_string(outputs[0].size()) + " artifacts byte-identical across two runs" : detail};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"fig1 recipe rank", fig1_recipe},
        {"fig3, fig4a, fig4b recipe ranks", deep_and_tanh_recipes},
        {"rank monotonicity over 20 seeds", rank_monotonicity},
        {"global optimality gap", optimality_gap},
        {"rank bump oracle", bump_oracle},
        {"rank product lemmas oracle", rank_lemma_oracle},
        {"input noise identity", input_noise_oracle},
        {"dropout / input noise equivalence", dropout_oracle},
        {"sgd deviation bound", sgd_oracle},
        {"gradient correctness", gradient_oracle},
        {"determinism", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("AC%-2d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
