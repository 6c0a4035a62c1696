#pragma once

// Falsifiable numerical checks for the rank-perturbation, noise-equivalence
// and SGD-bound results. Every check is deterministic for a given RngStream
// and reports its worst observed violation.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "ranktrace/linalg.hpp"
#include "ranktrace/netcore.hpp"
#include "ranktrace/noisekit.hpp"
#include "ranktrace/rng.hpp"
#include "ranktrace/trainer.hpp"

namespace ranktrace {

struct OracleReport {
    std::string name;
    std::size_t trials = 0;
    std::size_t failures = 0;
    double worst_violation = 0.0;
    bool pass = false;

    /// `name trials failures worst_violation pass|fail`
    [[nodiscard]] std::string line() const {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6e", worst_violation);
        return name + " " + std::to_string(trials) + " " + std::to_string(failures) + " " + buf + " " +
               (pass ? "pass" : "fail");
    }

    void record(bool ok, double violation) {
        ++trials;
        if (!ok) ++failures;
        if (std::isfinite(violation)) {
            worst_violation = std::max(worst_violation, violation);
        } else {
            worst_violation = violation;
        }
    }
};

using RankBumpFn = std::function<DenseMatrix(const DenseMatrix&, double)>;

inline DenseMatrix default_rank_bump(const DenseMatrix& a, double eps) { return rank_bump(a, eps); }

namespace detail {

// Integer-valued m x n matrix of exact rank r: product of small-integer
// factors, redrawn until its numerical rank is r.
inline DenseMatrix integer_matrix_of_rank(Eigen::Index m, Eigen::Index n, Eigen::Index r, RngStream& rng) {
    if (r == 0) {
        return DenseMatrix::Zero(m, n);
    }
    for (int attempt = 0; attempt < 100; ++attempt) {
        DenseMatrix p(m, r);
        DenseMatrix q(r, n);
        for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<double>(rng.uniform_int(-3, 3));
        for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = static_cast<double>(rng.uniform_int(-3, 3));
        DenseMatrix a = p * q;
        if (numerical_rank(a) == r) {
            return a;
        }
    }
    throw GenerationFailed("could not draw an integer matrix of the requested rank");
}

inline double smallest_retained_singular(const DenseMatrix& a) {
    const Vector s = singular_values(a);
    const int r = rank_of_spectrum(s);
    return r == 0 ? 0.0 : s(r - 1);
}

// Applies k successive bumps; each new singular value sits strictly between
// 0.2 and 0.8 of the previous smallest one. Zero matrices get eps = 1.
inline DenseMatrix bump_k_times(DenseMatrix a, int k, RngStream& rng, const RankBumpFn& bump) {
    for (int i = 0; i < k; ++i) {
        const double floor_sv = smallest_retained_singular(a);
        const double eps = floor_sv == 0.0 ? 1.0 : rng.uniform(0.2, 0.8) * floor_sv;
        a = bump(a, eps);
    }
    return a;
}

} // namespace detail

/// Rank of a product never drops when factors are bumped, in the three
/// configurations: bump B with r_B = n-k and r_A >= n-k; bump A with
/// r_A = n-k; bump both with r_A + r_B = n-2k. Generators enforce and
/// re-check the preconditions before the claim is tested.
inline OracleReport check_rank_lemmas(std::size_t trials, Eigen::Index max_dim, RngStream& rng,
                                      const RankBumpFn& bump = default_rank_bump) {
    if (max_dim < 3) {
        throw InvalidInput("check_rank_lemmas needs max_dim >= 3");
    }
    OracleReport rep;
    rep.name = "rank_lemmas";
    auto dim = [&](Eigen::Index lo, Eigen::Index hi) {
        return static_cast<Eigen::Index>(rng.uniform_int(static_cast<long>(lo), static_cast<long>(hi)));
    };
    for (std::size_t t = 0; t < trials; ++t) {
        const int k = static_cast<int>(rng.uniform_int(1, 2));
        const int variant = static_cast<int>(t % 3);
        DenseMatrix a;
        DenseMatrix b;
        DenseMatrix a_hat;
        DenseMatrix b_hat;
        bool preconditions = false;
        for (int attempt = 0; attempt < 50 && !preconditions; ++attempt) {
            if (variant == 0) {
                // B-side bump: r_B = n - k, r_A >= n - k, B-hat reaches rank n.
                const Eigen::Index n = dim(k + 1, max_dim);
                const Eigen::Index p = dim(n, max_dim);
                const Eigen::Index m = dim(n - k, max_dim);
                const Eigen::Index ra = dim(n - k, std::min(m, n));
                a = detail::integer_matrix_of_rank(m, n, ra, rng);
                b = detail::integer_matrix_of_rank(n, p, n - k, rng);
                a_hat = a;
                b_hat = detail::bump_k_times(b, k, rng, bump);
                preconditions = numerical_rank(a) >= n - k && numerical_rank(b) == n - k &&
                                numerical_rank(b_hat) == numerical_rank(b) + k;
            } else if (variant == 1) {
                // A-side bump: r_A = n - k.
                const Eigen::Index n = dim(k + 1, max_dim);
                const Eigen::Index m = dim(n, max_dim);
                const Eigen::Index p = dim(1, max_dim);
                const Eigen::Index rb = dim(0, std::min(n, p));
                a = detail::integer_matrix_of_rank(m, n, n - k, rng);
                b = detail::integer_matrix_of_rank(n, p, rb, rng);
                a_hat = detail::bump_k_times(a, k, rng, bump);
                b_hat = b;
                preconditions = numerical_rank(a) == n - k && numerical_rank(a_hat) == numerical_rank(a) + k;
            } else {
                // Both bumped: r_A + r_B = n - 2k.
                const Eigen::Index n = dim(2 * k + 1, max_dim);
                const Eigen::Index ra = dim(0, n - 2 * k);
                const Eigen::Index rb = n - 2 * k - ra;
                const Eigen::Index m = dim(std::max<Eigen::Index>(ra + k, 1), max_dim);
                const Eigen::Index p = dim(std::max<Eigen::Index>(rb + k, 1), max_dim);
                a = detail::integer_matrix_of_rank(m, n, ra, rng);
                b = detail::integer_matrix_of_rank(n, p, rb, rng);
                a_hat = detail::bump_k_times(a, k, rng, bump);
                b_hat = detail::bump_k_times(b, k, rng, bump);
                preconditions = numerical_rank(a) + numerical_rank(b) == n - 2 * k &&
                                numerical_rank(a_hat) == numerical_rank(a) + k &&
                                numerical_rank(b_hat) == numerical_rank(b) + k;
            }
        }
        if (!preconditions) {
            // The bump itself broke the rank contract: count against it.
            rep.record(false, 1.0);
            continue;
        }
        const int before = numerical_rank(a * b);
        const int after = numerical_rank(a_hat * b_hat);
        rep.record(after >= before, static_cast<double>(std::max(0, before - after)));
    }
    rep.pass = rep.failures == 0;
    return rep;
}

/// Single bump properties on random rank-deficient matrices: rank goes up by
/// exactly one, |A - A_hat|_2 = eps within 1e-10, and the trace cosine is
/// positive and equals sqrt(sum s^2 / (sum s^2 + eps^2)) within 1e-12.
inline OracleReport check_rank_bump_lemmas(std::size_t trials, RngStream& rng,
                                           const RankBumpFn& bump = default_rank_bump,
                                           Eigen::Index max_dim = 20) {
    OracleReport rep;
    rep.name = "rank_bump";
    for (std::size_t t = 0; t < trials; ++t) {
        const Eigen::Index m = rng.uniform_int(2, max_dim);
        const Eigen::Index n = rng.uniform_int(2, max_dim);
        const Eigen::Index p = std::min(m, n);

        if (t == 0) {
            // Full-rank input must be refused.
            bool refused = false;
            try {
                bump(rng.gaussian(m, n), 1e-3);
            } catch (const FullRankError&) {
                refused = true;
            }
            rep.record(refused, refused ? 0.0 : 1.0);
            continue;
        }

        const Eigen::Index r = rng.uniform_int(0, p - 1);
        const DenseMatrix a = r == 0 ? DenseMatrix::Zero(m, n) : DenseMatrix(rng.gaussian(m, r) * rng.gaussian(r, n));
        const Vector s = singular_values(a);
        const int rank_a = rank_of_spectrum(s);
        if (rank_a != r) {
            --t; // generator produced a degenerate draw; redraw
            continue;
        }
        const double fraction = (t % 10 == 1) ? 0.9 : rng.uniform(0.05, 0.9);
        const double eps = r == 0 ? rng.uniform(0.1, 2.0) : fraction * s(r - 1);

        DenseMatrix a_hat;
        try {
            a_hat = bump(a, eps);
        } catch (const Error&) {
            rep.record(false, 1.0);
            continue;
        }
        double violation = 0.0;
        bool ok = numerical_rank(a_hat) == r + 1;
        if (!ok) violation = std::max(violation, 1.0);

        const double dist_err = std::abs(spectral_norm(a - a_hat) - eps);
        ok = ok && dist_err <= 1e-10;
        violation = std::max(violation, dist_err);

        if (r > 0) {
            const double energy = s.head(r).squaredNorm();
            const double closed = std::sqrt(energy / (energy + eps * eps));
            const double c = matrix_cosine(a, a_hat);
            const double cos_err = std::abs(c - closed);
            ok = ok && c > 0.0 && cos_err <= 1e-12;
            violation = std::max(violation, cos_err);
        }
        rep.record(ok, violation);
    }
    rep.pass = rep.failures == 0;
    return rep;
}

namespace detail {

inline NetworkWeights random_network(const LayerDims& dims, RngStream& rng, double scale = 1.0) {
    std::vector<DenseMatrix> layers;
    for (std::size_t i = 1; i < dims.values().size(); ++i) {
        layers.push_back(rng.gaussian(dims[i], dims[i - 1], 0.0, scale / std::sqrt(static_cast<double>(dims[i - 1]))));
    }
    return NetworkWeights(std::move(layers));
}

inline LayerDims random_dims(std::size_t depth, Eigen::Index lo, Eigen::Index hi, RngStream& rng) {
    std::vector<Eigen::Index> d;
    for (std::size_t i = 0; i <= depth; ++i) d.push_back(rng.uniform_int(lo, hi));
    return LayerDims(std::move(d));
}

inline double relative_difference(const DenseMatrix& got, const DenseMatrix& want) {
    const double scale = std::max(got.norm(), want.norm());
    return scale == 0.0 ? 0.0 : (got - want).norm() / scale;
}

} // namespace detail

/// grad(X + eps) - grad(X) == phi for random linear networks of depth 2..4,
/// every layer, relative tolerance 1e-8. The first trial uses eps = 0.
inline OracleReport check_input_noise_identity(std::size_t trials, RngStream& rng) {
    OracleReport rep;
    rep.name = "input_noise_identity";
    for (std::size_t t = 0; t < trials; ++t) {
        const std::size_t depth = static_cast<std::size_t>(rng.uniform_int(2, 4));
        const LayerDims dims = detail::random_dims(depth, 1, 6, rng);
        const NetworkWeights w = detail::random_network(dims, rng);
        const Eigen::Index m = rng.uniform_int(3, 10);
        const Dataset d{rng.gaussian(dims.input(), m), rng.gaussian(dims.output(), m)};
        const DenseMatrix eps = t == 0 ? DenseMatrix::Zero(dims.input(), m)
                                       : DenseMatrix(rng.gaussian(dims.input(), m, 0.0, rng.uniform(0.01, 1.0)));
        const Dataset noisy{d.x + eps, d.y};
        bool ok = true;
        double worst = 0.0;
        for (std::size_t i = 0; i < depth; ++i) {
            const DenseMatrix g_clean = closed_form_gradient(w, d, i);
            const DenseMatrix g_noisy = closed_form_gradient(w, noisy, i);
            const DenseMatrix phi = input_noise_phi(w, d, eps, i);
            const DenseMatrix diff = g_noisy - g_clean - phi;
            const double scale = std::max({g_clean.norm(), g_noisy.norm(), phi.norm()});
            const double rel = scale == 0.0 ? diff.norm() : diff.norm() / scale;
            if (t == 0) {
                ok = ok && diff.isZero(0.0) && phi.isZero(0.0);
            }
            ok = ok && rel <= 1e-8;
            worst = std::max(worst, rel);
        }
        rep.record(ok, worst);
    }
    rep.pass = rep.failures == 0;
    return rep;
}

struct MonteCarloEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

struct DropoutEquivalence {
    double sigma_d = 0.0;
    double closed_dropout = 0.0;         // weight-mask Gaussian dropout closed form
    double closed_input = 0.0;           // input-noise closed form at beta = sigma_d^2
    double closed_entrywise = 0.0;       // exact value for independent per-weight masks
    MonteCarloEstimate mc_dropout;       // one N(1, s^2) factor per row of W_2
    MonteCarloEstimate mc_input;         // X (I + eps), eps_ij ~ N(0, beta / m)
    MonteCarloEstimate mc_entrywise;     // independent N(1, s^2) per entry of W_2
};

namespace detail {

template <class Sampler>
MonteCarloEstimate monte_carlo(std::size_t samples, Sampler&& draw) {
    // Welford running moments.
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 1; i <= samples; ++i) {
        const double v = draw();
        const double delta = v - mean;
        mean += delta / static_cast<double>(i);
        m2 += delta * (v - mean);
    }
    const double var = samples > 1 ? m2 / static_cast<double>(samples - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(samples))};
}

} // namespace detail

inline DropoutEquivalence dropout_equivalence_estimates(const NetworkWeights& w, const Dataset& d, double sigma_d,
                                                        std::size_t mc_samples, RngStream& rng) {
    DropoutEquivalence out;
    out.sigma_d = sigma_d;
    out.closed_dropout = gaussian_dropout_expected_loss(w, d, sigma_d);
    out.closed_input = input_noise_expected_loss(w, d, sigma_d * sigma_d);
    out.closed_entrywise = gaussian_dropout_entrywise_expected_loss(w, d, sigma_d);

    const DenseMatrix hidden = w[0] * d.x;
    const Eigen::Index m = d.samples();
    const NoiseSpec mask_spec = NoiseSpec::dropout_gaussian(sigma_d);

    RngStream row_rng = rng.fork(1);
    out.mc_dropout = detail::monte_carlo(mc_samples, [&] {
        const DenseMatrix g = sample_dropout_mask(w[1].rows(), 1, mask_spec, row_rng);
        const DenseMatrix masked = g.asDiagonal() * w[1];
        return (d.y - masked * hidden).squaredNorm();
    });

    RngStream entry_rng = rng.fork(2);
    out.mc_entrywise = detail::monte_carlo(mc_samples, [&] {
        const DenseMatrix g = sample_dropout_mask(w[1].rows(), w[1].cols(), mask_spec, entry_rng);
        return (d.y - w[1].cwiseProduct(g) * hidden).squaredNorm();
    });

    RngStream input_rng = rng.fork(3);
    const DenseMatrix out_clean = w[1] * hidden;
    const double beta = sigma_d * sigma_d;
    out.mc_input = detail::monte_carlo(mc_samples, [&] {
        if (beta == 0.0) {
            return (d.y - out_clean).squaredNorm();
        }
        const DenseMatrix eps = sample_input_noise(m, m, beta, input_rng);
        return (d.y - out_clean - out_clean * eps).squaredNorm();
    });
    return out;
}

namespace detail {

// |estimate - target| in standard errors; exact agreement counts as 0.
inline double standard_errors_off(const MonteCarloEstimate& e, double target) {
    const double diff = std::abs(e.mean - target);
    const double slack = 1e-12 * std::max(1.0, std::abs(target));
    if (diff <= slack) return 0.0;
    return e.standard_error > 0.0 ? diff / e.standard_error : std::numeric_limits<double>::infinity();
}

} // namespace detail

/// Dropout / input-noise equivalence on a random two-layer network: closed
/// forms agree at beta = sigma_d^2 to 1e-12 relative, and each Monte-Carlo
/// estimate is within 3 standard errors of its closed form.
inline OracleReport check_dropout_equivalence(std::size_t mc_samples, RngStream& rng, double sigma_d = 0.5,
                                              DropoutEquivalence* detail_out = nullptr) {
    const LayerDims dims{4, 3, 2};
    const NetworkWeights w = detail::random_network(dims, rng);
    const Eigen::Index m = 6;
    const Dataset d{rng.gaussian(dims.input(), m), rng.gaussian(dims.output(), m)};
    const DropoutEquivalence e = dropout_equivalence_estimates(w, d, sigma_d, mc_samples, rng);
    if (detail_out) *detail_out = e;

    OracleReport rep;
    rep.name = "dropout_equivalence";
    const double closed_gap = std::abs(e.closed_dropout - e.closed_input) / std::max(1.0, e.closed_dropout);
    rep.record(closed_gap <= 1e-12, closed_gap);
    for (const auto& [est, target] : {std::pair{e.mc_dropout, e.closed_dropout}, std::pair{e.mc_input, e.closed_input},
                                      std::pair{e.mc_entrywise, e.closed_entrywise}}) {
        const double z = detail::standard_errors_off(est, target);
        rep.record(z <= 3.0, z);
    }
    rep.pass = rep.failures == 0;
    return rep;
}

/// Markov-type bound |g_hat - g|_2 <= sqrt(d s^2 + gamma) / delta between the
/// perturbed full-batch gradient g_hat = G + N(0, s^2 I) and a mini-batch
/// gradient g. gamma is estimated first from an independent batch sample.
/// Passes if the violation fraction is at most delta + 2 sqrt(delta (1 - delta) / trials).
inline OracleReport check_sgd_bound(const NetworkWeights& w, const Dataset& d, std::size_t batch_size, double sigma,
                                    double delta, std::size_t trials, RngStream& rng,
                                    std::size_t gamma_trials = 0) {
    if (!(delta > 0.0 && delta < 1.0)) {
        throw InvalidInput("delta must lie in (0, 1)");
    }
    if (trials == 0) {
        throw InvalidInput("check_sgd_bound needs at least one trial");
    }
    RngStream gamma_rng = rng.fork(1);
    const SgdGradientStats stats = sgd_gradient_stats(w, d, batch_size, gamma_trials ? gamma_trials : trials, gamma_rng);
    const Vector full = stack_gradients(closed_form_gradients(w, d));
    const double dim = static_cast<double>(full.size());
    const double bound = std::sqrt(dim * sigma * sigma + stats.gamma_hat) / delta;

    RngStream noise_rng = rng.fork(2);
    BatchSampler sampler(d.samples(), batch_size, rng.fork(3));
    OracleReport rep;
    char buf[32];
    std::snprintf(buf, sizeof buf, "sgd_bound_delta_%.2f", delta);
    rep.name = buf;
    std::size_t violations = 0;
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        Vector g_hat = full;
        if (sigma > 0.0) {
            for (Eigen::Index i = 0; i < g_hat.size(); ++i) g_hat(i) += noise_rng.normal(0.0, sigma);
        }
        const Vector g = stack_gradients(minibatch_gradients(w, d, sampler.next()));
        const double dist = (g_hat - g).norm();
        if (dist > bound) ++violations;
        worst = std::max(worst, bound > 0.0 ? dist / bound : (dist > 0.0 ? std::numeric_limits<double>::infinity() : 0.0));
    }
    const double fraction = static_cast<double>(violations) / static_cast<double>(trials);
    const double allowance = delta + 2.0 * std::sqrt(delta * (1.0 - delta) / static_cast<double>(trials));
    rep.trials = trials;
    rep.failures = fraction <= allowance ? 0 : violations;
    rep.worst_violation = worst;
    rep.pass = rep.failures == 0;
    return rep;
}

/// Closed-form (linear) and backprop (all activations) gradients against
/// central finite differences with step 1e-6; relative error below 1e-5.
inline OracleReport check_gradients(std::size_t configs_per_activation, RngStream& rng) {
    OracleReport rep;
    rep.name = "gradient_check";
    const ActivationKind kinds[] = {ActivationKind::linear, ActivationKind::sigmoid, ActivationKind::tanh};
    for (ActivationKind kind : kinds) {
        for (std::size_t c = 0; c < configs_per_activation; ++c) {
            const std::size_t depth = static_cast<std::size_t>(rng.uniform_int(1, 3));
            const LayerDims dims = detail::random_dims(depth, 1, 5, rng);
            const NetworkWeights w = detail::random_network(dims, rng);
            const Eigen::Index m = rng.uniform_int(1, 6);
            const Dataset d{rng.gaussian(dims.input(), m), rng.gaussian(dims.output(), m)};
            const Activation act{kind, kind == ActivationKind::tanh && (c % 2 == 1)};
            const auto bp = backprop_gradients(w, act, d);
            double worst = 0.0;
            for (std::size_t i = 0; i < depth; ++i) {
                const DenseMatrix fd = finite_difference_gradient(w, act, d, i);
                worst = std::max(worst, detail::relative_difference(bp[i], fd));
                if (act.is_linear()) {
                    worst = std::max(worst, detail::relative_difference(closed_form_gradient(w, d, i), fd));
                }
            }
            rep.record(worst < 1e-5, worst);
        }
    }
    rep.pass = rep.failures == 0;
    return rep;
}

} // namespace ranktrace
