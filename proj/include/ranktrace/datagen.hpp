#pragma once

// Synthetic data satisfying the full-rank / distinct-spectrum conditions under
// which every full-rank critical point of a deep linear network is a global
// minimum, plus low-rank weight initialization.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "ranktrace/error.hpp"
#include "ranktrace/linalg.hpp"
#include "ranktrace/netcore.hpp"
#include "ranktrace/rng.hpp"

namespace ranktrace {

struct AssumptionCertificate {
    bool min_dim_ok = false;         // narrowest layer equals min(d_x, d_y)
    bool sample_ok = false;          // d_x, d_y <= m
    bool xx_full_rank = false;       // X X^T full rank
    bool yx_full_rank = false;       // Y X^T full rank
    bool distinct_singulars = false; // spectrum of Y X^T (X X^T)^{-1} X has no repeats
    double min_singular_gap = 0.0;   // smallest consecutive gap relative to sigma_1

    [[nodiscard]] bool certified() const noexcept {
        return min_dim_ok && sample_ok && xx_full_rank && yx_full_rank && distinct_singulars;
    }
};

inline constexpr double default_singular_gap = 1e-8;

inline AssumptionCertificate verify_assumptions(const Dataset& d, const LayerDims& dims,
                                                RankTolerance tol = {}, double gap_tol = default_singular_gap) {
    d.validate();
    AssumptionCertificate c;
    const Eigen::Index dx = d.input_dim();
    const Eigen::Index dy = d.output_dim();
    const Eigen::Index m = d.samples();

    c.min_dim_ok = dims.min_width() == std::min(dims.input(), dims.output());
    c.sample_ok = dx <= m && dy <= m;

    const DenseMatrix xxt = d.x * d.x.transpose();
    c.xx_full_rank = numerical_rank(xxt, tol) == dx;
    c.yx_full_rank = numerical_rank(d.y * d.x.transpose(), tol) == std::min(dx, dy);
    if (!c.xx_full_rank) {
        return c;
    }

    // Y X^T (X X^T)^{-1} X = Y Q Q^T with Q an orthonormal basis of X's row
    // space, so its singular values are those of Y Q.
    Eigen::HouseholderQR<DenseMatrix> qr(d.x.transpose());
    const DenseMatrix q = qr.householderQ() * DenseMatrix::Identity(m, dx);
    const Vector s = singular_values(d.y * q);
    if (s.size() == 0 || s(0) <= 0.0) {
        return c;
    }
    double gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 1; i < s.size(); ++i) {
        gap = std::min(gap, (s(i - 1) - s(i)) / s(0));
    }
    c.min_singular_gap = s.size() > 1 ? gap : 1.0;
    c.distinct_singulars = c.min_singular_gap > gap_tol;
    return c;
}

inline std::string describe_failure(const AssumptionCertificate& c) {
    if (!c.sample_ok) return "sample_ok violated: d_x and d_y must not exceed m";
    if (!c.min_dim_ok) return "min_dim_ok violated: a hidden layer is narrower than min(d_x, d_y)";
    if (!c.xx_full_rank || !c.yx_full_rank) return "full_rank violated: X X^T or Y X^T is rank deficient";
    if (!c.distinct_singulars) return "distinct_singulars violated: repeated singular values";
    return "certified";
}

/// Standard-Gaussian X (d_x x m) and Y (d_y x m), redrawn until certified.
inline Dataset synth_dataset(Eigen::Index dx, Eigen::Index dy, Eigen::Index m, std::uint64_t seed,
                             int max_attempts = 8) {
    if (dx <= 0 || dy <= 0 || m <= 0) {
        throw InvalidInput("dataset dimensions must be positive");
    }
    if (dx > m || dy > m) {
        throw AssumptionViolated("sample_ok violated: d_x and d_y must not exceed m");
    }
    const LayerDims dims{dx, dy};
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        RngStream rng(seed, static_cast<std::uint64_t>(attempt));
        Dataset d{rng.gaussian(dx, m), rng.gaussian(dy, m)};
        if (verify_assumptions(d, dims).certified()) {
            return d;
        }
    }
    throw GenerationFailed("could not draw a certified dataset in " + std::to_string(max_attempts) + " attempts");
}

/// Default initial rank for experiments: floor(0.4 min(d_x, d_y)).
inline Eigen::Index default_init_rank(const LayerDims& dims) {
    return static_cast<Eigen::Index>(std::floor(0.4 * static_cast<double>(std::min(dims.input(), dims.output()))));
}

/// W_i = gain / sqrt(d_{i-1}) * A_i B_i with Gaussian A_i (d_i x r0) and
/// B_i (r0 x d_{i-1}); every layer has rank r0. r0 = 0 gives zero weights.
inline NetworkWeights low_rank_init(const LayerDims& dims, Eigen::Index r0, double gain, std::uint64_t seed) {
    if (r0 < 0) {
        throw InvalidInput("initial rank must be >= 0");
    }
    for (std::size_t i = 1; i < dims.values().size(); ++i) {
        if (r0 > std::min(dims[i], dims[i - 1])) {
            throw InvalidInput("initial rank exceeds a layer's dimensions");
        }
    }
    if (!(gain > 0.0) || !std::isfinite(gain)) {
        throw InvalidInput("init gain must be finite and > 0");
    }
    RngStream rng(seed, 0x1417);
    std::vector<DenseMatrix> layers;
    for (std::size_t i = 1; i < dims.values().size(); ++i) {
        const Eigen::Index rows = dims[i];
        const Eigen::Index cols = dims[i - 1];
        if (r0 == 0) {
            layers.push_back(DenseMatrix::Zero(rows, cols));
            continue;
        }
        const DenseMatrix a = rng.gaussian(rows, r0);
        const DenseMatrix b = rng.gaussian(r0, cols);
        layers.push_back((gain / std::sqrt(static_cast<double>(cols))) * (a * b));
    }
    return NetworkWeights(std::move(layers));
}

} // namespace ranktrace
