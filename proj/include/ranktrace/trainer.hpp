#pragma once

// Training loops with per-iteration rank tracking of the product matrix.
// Supports plain and perturbed full-batch gradient descent, mini-batch SGD,
// noisy inputs/targets and dropout on hidden representations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "ranktrace/error.hpp"
#include "ranktrace/linalg.hpp"
#include "ranktrace/netcore.hpp"
#include "ranktrace/noisekit.hpp"
#include "ranktrace/rng.hpp"

namespace ranktrace {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t iterations = 1;
    std::size_t batch_size = 0; // 0 = full batch
    NoiseSpec noise;
    RankTolerance rank_tol;
    bool record_layer_ranks = false;
    std::uint64_t seed = 0;

    void validate(Eigen::Index samples) const {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw InvalidInput("learning rate must be finite and >= 0");
        }
        if (batch_size > static_cast<std::size_t>(samples)) {
            throw InvalidInput("batch size exceeds the number of samples");
        }
        noise.validate();
    }
};

struct RankRecord {
    std::size_t iteration = 0;
    double loss = 0.0;
    int rank_product = 0;
    std::vector<int> layer_ranks; // empty unless requested
};

struct RankTrajectory {
    std::vector<RankRecord> records;

    [[nodiscard]] bool empty() const noexcept { return records.empty(); }
    [[nodiscard]] const RankRecord& back() const { return records.back(); }
    [[nodiscard]] int final_rank() const { return records.empty() ? 0 : records.back().rank_product; }
    [[nodiscard]] std::vector<int> ranks() const {
        std::vector<int> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(r.rank_product);
        return out;
    }
    [[nodiscard]] std::vector<double> losses() const {
        std::vector<double> out;
        out.reserve(records.size());
        for (const auto& r : records) out.push_back(r.loss);
        return out;
    }
};

/// Loss blew past 1e12 or went non-finite; carries everything recorded so far.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t iteration, RankTrajectory partial)
        : Error("training diverged at iteration " + std::to_string(iteration)), iteration_(iteration),
          partial_(std::move(partial)) {}

    [[nodiscard]] std::size_t iteration() const noexcept { return iteration_; }
    [[nodiscard]] const RankTrajectory& partial() const noexcept { return partial_; }

private:
    std::size_t iteration_;
    RankTrajectory partial_;
};

struct TrainResult {
    NetworkWeights weights;
    RankTrajectory trajectory;
};

inline constexpr double divergence_threshold = 1e12;

/// Uniform mini-batches without replacement; reshuffles when a full pass
/// cannot supply another batch.
class BatchSampler {
public:
    BatchSampler(Eigen::Index samples, std::size_t batch, RngStream rng)
        : order_(static_cast<std::size_t>(samples)), batch_(batch), rng_(std::move(rng)) {
        if (batch_ == 0 || batch_ > order_.size()) {
            throw InvalidInput("batch size must lie in [1, m]");
        }
        std::iota(order_.begin(), order_.end(), Eigen::Index{0});
        cursor_ = order_.size();
    }

    std::vector<Eigen::Index> next() {
        if (batch_ == order_.size()) {
            return order_sorted();
        }
        if (cursor_ + batch_ > order_.size()) {
            std::shuffle(order_.begin(), order_.end(), rng_.engine());
            cursor_ = 0;
        }
        std::vector<Eigen::Index> idx(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                      order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
        cursor_ += batch_;
        std::sort(idx.begin(), idx.end());
        return idx;
    }

private:
    std::vector<Eigen::Index> order_sorted() const {
        std::vector<Eigen::Index> idx(order_.size());
        std::iota(idx.begin(), idx.end(), Eigen::Index{0});
        return idx;
    }

    std::vector<Eigen::Index> order_;
    std::size_t batch_;
    std::size_t cursor_ = 0;
    RngStream rng_;
};

inline DenseMatrix gather_columns(const DenseMatrix& m, const std::vector<Eigen::Index>& idx) {
    DenseMatrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
    }
    return out;
}

/// Mini-batch gradient rescaled by m / |batch| so that its expectation over
/// batches is the full-batch gradient. A batch covering every sample
/// reproduces the full gradient bit for bit.
inline std::vector<DenseMatrix> minibatch_gradients(const NetworkWeights& w, const Dataset& d,
                                                    const std::vector<Eigen::Index>& idx) {
    if (static_cast<Eigen::Index>(idx.size()) == d.samples()) {
        return closed_form_gradients(w, d);
    }
    auto grads = closed_form_gradients(w, gather_columns(d.x, idx), gather_columns(d.y, idx));
    const double scale = static_cast<double>(d.samples()) / static_cast<double>(idx.size());
    for (auto& g : grads) g *= scale;
    return grads;
}

inline Vector stack_gradients(const std::vector<DenseMatrix>& grads) {
    Eigen::Index n = 0;
    for (const auto& g : grads) n += g.size();
    Vector v(n);
    Eigen::Index at = 0;
    for (const auto& g : grads) {
        v.segment(at, g.size()) = Eigen::Map<const Vector>(g.data(), g.size());
        at += g.size();
    }
    return v;
}

namespace detail {

inline RankRecord make_record(std::size_t t, double loss, const NetworkWeights& w, const DenseMatrix& product,
                              const TrainConfig& cfg) {
    RankRecord rec;
    rec.iteration = t;
    rec.loss = loss;
    rec.rank_product = numerical_rank(product, cfg.rank_tol);
    if (cfg.record_layer_ranks) {
        for (const auto& layer : w.layers()) {
            rec.layer_ranks.push_back(numerical_rank(layer, cfg.rank_tol));
        }
    }
    return rec;
}

// Clean full-dataset loss; for linear nets also hands back R and RX - Y.
struct LossEval {
    double loss = 0.0;
    DenseMatrix product;
    DenseMatrix residual;
};

inline LossEval evaluate(const NetworkWeights& w, const Activation& act, const Dataset& d) {
    LossEval e;
    e.product = product_matrix(w);
    if (act.is_linear()) {
        e.residual = e.product * d.x - d.y;
        e.loss = 0.5 * e.residual.squaredNorm();
    } else {
        e.loss = squared_loss(w, act, d);
    }
    return e;
}

inline bool diverged(double loss) { return !std::isfinite(loss) || loss > divergence_threshold; }

} // namespace detail

/// Runs cfg.iterations updates W_i <- W_i - lr (dL/dW_i + noise) and records
/// loss and rank(W_H..W_1) before the first update and after each one.
/// The recorded loss is always the clean full-dataset loss.
inline TrainResult train(NetworkWeights w, const Activation& act, const Dataset& d, const TrainConfig& cfg) {
    d.validate();
    detail::require_compatible(w, d.x, d.y);
    cfg.validate(d.samples());

    RngStream grad_rng(cfg.seed, 1);
    RngStream data_rng(cfg.seed, 2);
    RngStream mask_rng(cfg.seed, 3);
    std::optional<BatchSampler> sampler;
    if (cfg.batch_size > 0) {
        sampler.emplace(d.samples(), cfg.batch_size, RngStream(cfg.seed, 4));
    }

    const NoiseSpec& noise = cfg.noise;
    const bool closed_form = act.is_linear() && !noise.is_dropout();

    const bool noisy_data = noise.mode == NoiseMode::input_gaussian || noise.mode == NoiseMode::output_gaussian;

    RankTrajectory traj;
    detail::LossEval eval = detail::evaluate(w, act, d);
    if (detail::diverged(eval.loss)) {
        throw DivergenceError(0, std::move(traj));
    }
    traj.records.push_back(detail::make_record(0, eval.loss, w, eval.product, cfg));

    for (std::size_t t = 1; t <= cfg.iterations; ++t) {
        DenseMatrix xt;
        DenseMatrix yt;
        double scale = 1.0;
        const bool full = !sampler || cfg.batch_size == static_cast<std::size_t>(d.samples());
        if (full) {
            if (!closed_form || noisy_data) {
                xt = d.x;
                yt = d.y;
            }
        } else {
            const auto idx = sampler->next();
            xt = gather_columns(d.x, idx);
            yt = gather_columns(d.y, idx);
            scale = static_cast<double>(d.samples()) / static_cast<double>(idx.size());
        }

        if (noise.mode == NoiseMode::input_gaussian) {
            xt += sample_input_noise(xt.rows(), xt.cols(), noise.param, data_rng);
        } else if (noise.mode == NoiseMode::output_gaussian && noise.param > 0.0) {
            yt += data_rng.gaussian(yt.rows(), yt.cols(), 0.0, noise.param);
        }

        std::vector<DenseMatrix> grads;
        if (closed_form && full && !noisy_data) {
            grads = closed_form_gradients_from_residual(w, d.x, eval.residual);
        } else if (closed_form) {
            grads = closed_form_gradients(w, xt, yt);
        } else if (noise.is_dropout()) {
            std::vector<DenseMatrix> masks;
            for (std::size_t k = 0; k + 1 < w.depth(); ++k) {
                masks.push_back(sample_dropout_mask(w[k].rows(), xt.cols(), noise, mask_rng));
            }
            grads = backprop_gradients(w, act, xt, yt, masks);
        } else {
            grads = backprop_gradients(w, act, xt, yt);
        }

        for (std::size_t i = 0; i < grads.size(); ++i) {
            if (scale != 1.0) grads[i] *= scale;
            if (noise.mode == NoiseMode::gradient_gaussian) {
                grads[i] = perturb_gradient(grads[i], noise.param, grad_rng);
            }
            w.layer(i) -= cfg.learning_rate * grads[i];
        }

        eval = detail::evaluate(w, act, d);
        if (detail::diverged(eval.loss) || !std::all_of(w.layers().begin(), w.layers().end(),
                                                   [](const DenseMatrix& m) { return m.allFinite(); })) {
            throw DivergenceError(t, std::move(traj));
        }
        traj.records.push_back(detail::make_record(t, eval.loss, w, eval.product, cfg));
    }
    return TrainResult{std::move(w), std::move(traj)};
}

struct SgdGradientStats {
    double gamma_hat = 0.0;
    std::vector<double> samples; // |g - G|_2 per trial
};

/// Empirical E|g - G|_2^2 between rescaled mini-batch gradients g and the
/// full-batch gradient G, all layers stacked into one vector.
inline SgdGradientStats sgd_gradient_stats(const NetworkWeights& w, const Dataset& d, std::size_t batch_size,
                                           std::size_t trials, RngStream& rng) {
    d.validate();
    if (batch_size == 0 || batch_size > static_cast<std::size_t>(d.samples())) {
        throw InvalidInput("batch size must lie in [1, m]");
    }
    const Vector full = stack_gradients(closed_form_gradients(w, d));
    BatchSampler sampler(d.samples(), batch_size, rng.fork(0x5eed));
    SgdGradientStats out;
    out.samples.reserve(trials);
    double sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        const Vector g = stack_gradients(minibatch_gradients(w, d, sampler.next()));
        const double dev = (g - full).norm();
        out.samples.push_back(dev);
        sum += dev * dev;
    }
    out.gamma_hat = trials ? sum / static_cast<double>(trials) : 0.0;
    return out;
}

struct RankMonotonicity {
    int dips = 0;          // records that sit below the running maximum
    int deepest_dip = 0;   // largest shortfall against the running maximum
    bool terminal_full = false;
    bool ok = false;
};

/// Non-decrease check that tolerates `allowed_dips` records falling at most
/// `allowed_depth` below the running maximum (threshold jitter), and
/// requires the final rank to equal `full_rank`.
inline RankMonotonicity check_rank_monotone(const RankTrajectory& traj, int full_rank, int allowed_dips = 1,
                                            int allowed_depth = 1) {
    RankMonotonicity out;
    int best = -1;
    for (const auto& rec : traj.records) {
        if (rec.rank_product < best) {
            ++out.dips;
            out.deepest_dip = std::max(out.deepest_dip, best - rec.rank_product);
        }
        best = std::max(best, rec.rank_product);
    }
    out.terminal_full = !traj.empty() && traj.final_rank() == full_rank;
    out.ok = out.terminal_full && out.dips <= allowed_dips && out.deepest_dip <= allowed_depth;
    return out;
}

} // namespace ranktrace
