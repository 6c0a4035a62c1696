#pragma once

// Experiment recipes: flat `key = value` files describing a dataset, an
// initialization and one or more training arms that share both.
//
// Keys (all required unless a default is given):
//   version               format version, must be 1
//   name                  recipe identifier
//   dims                  layer widths, e.g. 1000x500x250 (d_x first, d_y last)
//   activation            linear | sigmoid | tanh              (default linear)
//   activation_at_output  true | false                         (default false)
//   data.m                number of samples
//   data.seed             dataset seed
//   init.rank             rank of every initial layer          (default floor(0.4 min(d_x, d_y)))
//   init.gain             W_i = gain / sqrt(fan_in) * A B      (default 1 / sqrt(init.rank))
//   init.seed             initialization seed                  (default data.seed)
//   train.lr              learning rate
//   train.iters           iterations
//   train.batch           mini-batch size, 0 = full batch      (default 0)
//   train.seed            seed for noise and batch sampling    (default data.seed)
//   train.layer_ranks     record per-layer ranks               (default true)
//   train.rank_tol        relative rank threshold              (default 1e-9)
//   arms                  comma-separated arm names
//   arm.<name>.noise      noise spec (none, grad:s, input:b, output:s, dropout-b:p, dropout-g:s)
//   arm.<name>.expect     reach | below | none                 (default none)
//   expected_final_rank   rank checked by `reach` / `below` arms
//
// Lines starting with '#' are comments. Unknown or repeated keys are errors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ranktrace/datagen.hpp"
#include "ranktrace/dataset_io.hpp"
#include "ranktrace/error.hpp"
#include "ranktrace/netcore.hpp"
#include "ranktrace/noisekit.hpp"
#include "ranktrace/trainer.hpp"

namespace ranktrace {

class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text) {
        KeyValueConfig cfg;
        std::istringstream is{std::string(text)};
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string body = trim(line);
            if (body.empty() || body.front() == '#') {
                continue;
            }
            const auto eq = body.find('=');
            if (eq == std::string::npos) {
                throw InvalidInput("config line " + std::to_string(lineno) + ": expected key = value");
            }
            std::string key = trim(body.substr(0, eq));
            std::string value = trim(body.substr(eq + 1));
            if (key.empty()) {
                throw InvalidInput("config line " + std::to_string(lineno) + ": empty key");
            }
            if (!cfg.values_.emplace(key, value).second) {
                throw InvalidInput("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
            }
        }
        return cfg;
    }

    [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) {
            throw InvalidInput("config is missing key '" + key + "'");
        }
        used_.insert(key);
        return it->second;
    }

    std::string str(const std::string& key, const std::string& fallback) const {
        return has(key) ? str(key) : fallback;
    }

    double real(const std::string& key) const { return to_real(key, str(key)); }
    double real(const std::string& key, double fallback) const { return has(key) ? real(key) : fallback; }

    long long integer(const std::string& key) const {
        const std::string v = str(key);
        std::size_t used = 0;
        long long out = 0;
        try {
            out = std::stoll(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size()) {
            throw InvalidInput("config key '" + key + "' is not an integer: '" + v + "'");
        }
        return out;
    }
    long long integer(const std::string& key, long long fallback) const { return has(key) ? integer(key) : fallback; }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = str(key);
        if (v == "true" || v == "1" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "no") return false;
        throw InvalidInput("config key '" + key + "' is not a boolean: '" + v + "'");
    }

    /// Keys that were never read.
    [[nodiscard]] std::vector<std::string> unused() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_) {
            if (!used_.count(k)) out.push_back(k);
        }
        return out;
    }

private:
    static std::string trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return std::string(s.substr(b, e - b + 1));
    }

    static double to_real(const std::string& key, const std::string& v) {
        std::size_t used = 0;
        double out = 0.0;
        try {
            out = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != v.size()) {
            throw InvalidInput("config key '" + key + "' is not a number: '" + v + "'");
        }
        return out;
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

enum class ArmExpectation { none, reach, below };

struct ArmSpec {
    std::string name;
    NoiseSpec noise;
    ArmExpectation expect = ArmExpectation::none;
};

struct ExperimentRecipe {
    std::string name;
    LayerDims dims;
    Activation activation;
    Eigen::Index samples = 0;
    std::uint64_t data_seed = 0;
    Eigen::Index init_rank = 0;
    double init_gain = 1.0;
    std::uint64_t init_seed = 0;
    double learning_rate = 0.0;
    std::size_t iterations = 0;
    std::size_t batch_size = 0;
    std::uint64_t train_seed = 0;
    bool layer_ranks = true;
    double rank_tol = 1e-9;
    std::vector<ArmSpec> arms;
    int expected_final_rank = 0;

    static ExperimentRecipe parse(std::string_view text) {
        const KeyValueConfig cfg = KeyValueConfig::parse(text);
        if (cfg.integer("version") != 1) {
            throw InvalidInput("unsupported recipe version");
        }
        ExperimentRecipe r;
        r.name = cfg.str("name");
        r.dims = LayerDims::parse(cfg.str("dims"));
        r.activation.kind = Activation::parse_kind(cfg.str("activation", "linear"));
        r.activation.at_output = cfg.boolean("activation_at_output", false);
        r.samples = static_cast<Eigen::Index>(cfg.integer("data.m"));
        r.data_seed = static_cast<std::uint64_t>(cfg.integer("data.seed"));
        r.init_rank = static_cast<Eigen::Index>(cfg.integer("init.rank", default_init_rank(r.dims)));
        r.init_gain = cfg.real("init.gain", r.init_rank > 0 ? 1.0 / std::sqrt(static_cast<double>(r.init_rank)) : 1.0);
        r.init_seed = static_cast<std::uint64_t>(cfg.integer("init.seed", static_cast<long long>(r.data_seed)));
        r.learning_rate = cfg.real("train.lr");
        r.iterations = static_cast<std::size_t>(cfg.integer("train.iters"));
        r.batch_size = static_cast<std::size_t>(cfg.integer("train.batch", 0));
        r.train_seed = static_cast<std::uint64_t>(cfg.integer("train.seed", static_cast<long long>(r.data_seed)));
        r.layer_ranks = cfg.boolean("train.layer_ranks", true);
        r.rank_tol = cfg.real("train.rank_tol", 1e-9);
        r.expected_final_rank = static_cast<int>(cfg.integer("expected_final_rank"));

        std::string arms = cfg.str("arms");
        std::replace(arms.begin(), arms.end(), ',', ' ');
        std::istringstream is(arms);
        for (std::string arm; is >> arm;) {
            ArmSpec a;
            a.name = arm;
            a.noise = NoiseSpec::parse(cfg.str("arm." + arm + ".noise"));
            const std::string expect = cfg.str("arm." + arm + ".expect", "none");
            if (expect == "reach") a.expect = ArmExpectation::reach;
            else if (expect == "below") a.expect = ArmExpectation::below;
            else if (expect != "none") throw InvalidInput("arm '" + arm + "': expect must be reach, below or none");
            r.arms.push_back(std::move(a));
        }
        if (const auto extra = cfg.unused(); !extra.empty()) {
            throw InvalidInput("unknown recipe key '" + extra.front() + "'");
        }
        r.validate();
        return r;
    }

    static ExperimentRecipe load(const std::filesystem::path& path) { return parse(read_file(path)); }

    void validate() const {
        if (arms.empty()) {
            throw InvalidInput("recipe '" + name + "' has no arms");
        }
        if (samples <= 0 || iterations == 0) {
            throw InvalidInput("recipe '" + name + "': data.m and train.iters must be positive");
        }
        if (expected_final_rank < 0 || expected_final_rank > std::min(dims.input(), dims.output())) {
            throw InvalidInput("recipe '" + name + "': expected_final_rank exceeds min(d_x, d_y)");
        }
    }

    [[nodiscard]] TrainConfig config_for(const ArmSpec& arm) const {
        TrainConfig c;
        c.learning_rate = learning_rate;
        c.iterations = iterations;
        c.batch_size = batch_size;
        c.noise = arm.noise;
        c.rank_tol = RankTolerance(rank_tol);
        c.record_layer_ranks = layer_ranks;
        c.seed = train_seed;
        return c;
    }
};

struct ArmResult {
    ArmSpec arm;
    RankTrajectory trajectory;
    std::optional<std::size_t> diverged_at;
    bool expectation_met = true;

    [[nodiscard]] std::string expect_label() const {
        switch (arm.expect) {
        case ArmExpectation::reach: return " expect reach";
        case ArmExpectation::below: return " expect below";
        case ArmExpectation::none: break;
        }
        return " expect none";
    }
};

struct RecipeRun {
    std::uint64_t data_checksum = 0;
    std::uint64_t init_checksum = 0;
    std::vector<ArmResult> arms;

    [[nodiscard]] bool diverged() const {
        return std::any_of(arms.begin(), arms.end(), [](const ArmResult& a) { return a.diverged_at.has_value(); });
    }
    [[nodiscard]] bool expectations_met() const {
        return std::all_of(arms.begin(), arms.end(), [](const ArmResult& a) { return a.expectation_met; });
    }
};

/// Generates the shared dataset and initialization, then trains every arm.
inline RecipeRun run_recipe(const ExperimentRecipe& recipe) {
    const Dataset data = synth_dataset(recipe.dims.input(), recipe.dims.output(), recipe.samples, recipe.data_seed);
    const NetworkWeights init = low_rank_init(recipe.dims, recipe.init_rank, recipe.init_gain, recipe.init_seed);

    RecipeRun run;
    run.data_checksum = fnv1a64(encode_dataset(data));
    run.init_checksum = weights_checksum(init);
    for (const auto& arm : recipe.arms) {
        ArmResult res;
        res.arm = arm;
        try {
            res.trajectory = train(init, recipe.activation, data, recipe.config_for(arm)).trajectory;
        } catch (const DivergenceError& e) {
            res.trajectory = e.partial();
            res.diverged_at = e.iteration();
        }
        const int final_rank = res.trajectory.final_rank();
        switch (arm.expect) {
        case ArmExpectation::none: break;
        case ArmExpectation::reach:
            res.expectation_met = !res.diverged_at && final_rank == recipe.expected_final_rank;
            break;
        case ArmExpectation::below:
            res.expectation_met = !res.diverged_at && final_rank < recipe.expected_final_rank;
            break;
        }
        run.arms.push_back(std::move(res));
    }
    return run;
}

} // namespace ranktrace
