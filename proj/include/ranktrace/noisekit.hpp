#pragma once

// Noise mechanisms: gradient perturbation, additive input/output noise and
// multiplicative (Bernoulli or Gaussian) dropout, plus the closed-form
// expected losses that tie dropout to input noise for two-layer networks.

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>

#include "ranktrace/error.hpp"
#include "ranktrace/linalg.hpp"
#include "ranktrace/netcore.hpp"
#include "ranktrace/rng.hpp"

namespace ranktrace {

enum class NoiseMode {
    none,
    gradient_gaussian, // param: std-dev of additive gradient noise
    input_gaussian,    // param: beta, E[eps eps^T] = beta I
    output_gaussian,   // param: std-dev of additive target noise
    dropout_bernoulli, // param: drop probability p
    dropout_gaussian,  // param: std-dev of the N(1, s^2) mask
};

struct NoiseSpec {
    NoiseMode mode = NoiseMode::none;
    double param = 0.0;

    static NoiseSpec none() { return {}; }
    static NoiseSpec gradient(double sigma) { return make(NoiseMode::gradient_gaussian, sigma); }
    static NoiseSpec input(double beta) { return make(NoiseMode::input_gaussian, beta); }
    static NoiseSpec output(double sigma) { return make(NoiseMode::output_gaussian, sigma); }
    static NoiseSpec dropout_bernoulli(double p) { return make(NoiseMode::dropout_bernoulli, p); }
    static NoiseSpec dropout_gaussian(double sigma) { return make(NoiseMode::dropout_gaussian, sigma); }

    static NoiseSpec make(NoiseMode mode, double param) {
        NoiseSpec s{mode, param};
        s.validate();
        return s;
    }

    [[nodiscard]] bool is_dropout() const noexcept {
        return mode == NoiseMode::dropout_bernoulli || mode == NoiseMode::dropout_gaussian;
    }

    void validate() const {
        if (!std::isfinite(param)) {
            throw InvalidInput("noise parameter must be finite");
        }
        switch (mode) {
        case NoiseMode::none: break;
        case NoiseMode::gradient_gaussian:
        case NoiseMode::output_gaussian:
        case NoiseMode::dropout_gaussian:
            if (param < 0.0) throw InvalidInput("noise std-dev must be >= 0");
            break;
        case NoiseMode::input_gaussian:
            if (!(param > 0.0)) throw InvalidInput("input noise beta must be > 0");
            break;
        case NoiseMode::dropout_bernoulli:
            if (!(param > 0.0 && param < 1.0)) throw InvalidInput("dropout probability must lie in (0, 1)");
            break;
        }
    }

    /// Parses the command-line form: none | grad:s | input:b | output:s | dropout-b:p | dropout-g:s
    static NoiseSpec parse(std::string_view text) {
        if (text == "none") {
            return none();
        }
        const auto colon = text.find(':');
        if (colon == std::string_view::npos) {
            throw InvalidInput("malformed noise spec '" + std::string(text) + "'");
        }
        const std::string_view tag = text.substr(0, colon);
        const std::string value(text.substr(colon + 1));
        double v = 0.0;
        std::size_t used = 0;
        try {
            v = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != value.size()) {
            throw InvalidInput("malformed noise parameter in '" + std::string(text) + "'");
        }
        if (tag == "grad") return gradient(v);
        if (tag == "input") return input(v);
        if (tag == "output") return output(v);
        if (tag == "dropout-b") return dropout_bernoulli(v);
        if (tag == "dropout-g") return dropout_gaussian(v);
        throw InvalidInput("unknown noise mode '" + std::string(tag) + "'");
    }

    [[nodiscard]] std::string to_string() const {
        std::string os;
        switch (mode) {
        case NoiseMode::none: return "none";
        case NoiseMode::gradient_gaussian: os = "grad:"; break;
        case NoiseMode::input_gaussian: os = "input:"; break;
        case NoiseMode::output_gaussian: os = "output:"; break;
        case NoiseMode::dropout_bernoulli: os = "dropout-b:"; break;
        case NoiseMode::dropout_gaussian: os = "dropout-g:"; break;
        }
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, param);
        return os.append(buf, res.ptr);
    }
};

/// grad + E with E_ij ~ N(0, sigma^2) i.i.d. sigma = 0 returns grad unchanged
/// and consumes no draws.
inline DenseMatrix perturb_gradient(const DenseMatrix& grad, double sigma, RngStream& rng) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw InvalidInput("perturb_gradient: sigma must be finite and >= 0");
    }
    if (sigma == 0.0) {
        return grad;
    }
    return grad + rng.gaussian(grad.rows(), grad.cols(), 0.0, sigma);
}

namespace detail {

// (W_H .. W_{i+2}) and (W_i .. W_1) for 0-based layer i, so that the
// gradient of layer i is outer^T (RX - Y) X^T inner^T.
struct LayerSandwich {
    DenseMatrix outer; // d_y x d_{i+1}
    DenseMatrix inner; // d_i x d_x
};

inline LayerSandwich sandwich(const NetworkWeights& w, std::size_t layer) {
    if (layer >= w.depth()) {
        throw InvalidInput("layer index out of range");
    }
    LayerSandwich s;
    s.outer = DenseMatrix::Identity(w.output_dim(), w.output_dim());
    for (std::size_t k = w.depth() - 1; k > layer; --k) {
        s.outer = s.outer * w[k];
    }
    s.inner = DenseMatrix::Identity(w.input_dim(), w.input_dim());
    for (std::size_t k = 0; k < layer; ++k) {
        s.inner = w[k] * s.inner;
    }
    return s;
}

inline void require_two_layers(const NetworkWeights& w) {
    if (w.depth() != 2) {
        throw UnsupportedDepth("expected-loss closed forms are defined for two-layer networks");
    }
}

} // namespace detail

/// The weight-dependent perturbation phi with
///   grad_i(X + eps, Y) = grad_i(X, Y) + phi,
///   phi = Rl [R eps X^T + R X eps^T + R eps eps^T - Y eps^T] Rr,
/// Rl = W_{i+1}^T..W_H^T, Rr = W_1^T..W_{i-1}^T. Linear networks only.
inline DenseMatrix input_noise_phi(const NetworkWeights& w, const Dataset& d, const DenseMatrix& eps,
                                   std::size_t layer) {
    detail::require_compatible(w, d.x, d.y);
    if (eps.rows() != d.x.rows() || eps.cols() != d.x.cols()) {
        throw InvalidInput("input_noise_phi: eps must match X");
    }
    const auto s = detail::sandwich(w, layer);
    const DenseMatrix r = product_matrix(w);
    const DenseMatrix re = r * eps;
    const DenseMatrix core =
        re * d.x.transpose() + (r * d.x) * eps.transpose() + re * eps.transpose() - d.y * eps.transpose();
    return s.outer.transpose() * core * s.inner.transpose();
}

/// Gradient of layer i at (X, Y + eps_y). Equals the clean gradient minus
/// Rl eps_y X^T Rr, i.e. a perturbation linear in eps_y.
inline DenseMatrix output_noise_gradient(const NetworkWeights& w, const Dataset& d, const DenseMatrix& eps_y,
                                         std::size_t layer) {
    detail::require_compatible(w, d.x, d.y);
    if (eps_y.rows() != d.y.rows() || eps_y.cols() != d.y.cols()) {
        throw InvalidInput("output_noise_gradient: eps_y must match Y");
    }
    return closed_form_gradient(w, Dataset{d.x, d.y + eps_y}, layer);
}

/// Mask with entries in {0,1}, P(1) = 1 - p (Bernoulli) or N(1, s^2) (Gaussian).
inline DenseMatrix sample_dropout_mask(Eigen::Index rows, Eigen::Index cols, const NoiseSpec& spec,
                                       RngStream& rng) {
    if (!spec.is_dropout()) {
        throw InvalidInput("sample_dropout_mask: spec is not a dropout mode");
    }
    spec.validate();
    if (spec.mode == NoiseMode::dropout_gaussian) {
        if (spec.param == 0.0) {
            return DenseMatrix::Ones(rows, cols);
        }
        return rng.gaussian(rows, cols, 1.0, spec.param);
    }
    DenseMatrix m(rows, cols);
    const double keep = 1.0 - spec.param;
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = rng.bernoulli(keep) ? 1.0 : 0.0;
        }
    }
    return m;
}

/// O_k = W_k (Z .* B) with a freshly drawn mask B.
inline DenseMatrix dropout_forward(const DenseMatrix& wk, const DenseMatrix& z, const NoiseSpec& spec,
                                   RngStream& rng) {
    if (wk.cols() != z.rows()) {
        throw InvalidInput("dropout_forward: W_k and Z do not chain");
    }
    const DenseMatrix mask = sample_dropout_mask(z.rows(), z.cols(), spec, rng);
    return wk * z.cwiseProduct(mask);
}

/// E_G |Y - (W_2 .* G) W_1 X|_F^2 = |Y - W_2 W_1 X|_F^2 + s^2 |W_2 W_1 X|_F^2
/// (unhalved). Exact when each output unit of layer 2 carries one N(1, s^2)
/// factor shared by its incoming weights; see
/// gaussian_dropout_entrywise_expected_loss for independent per-weight masks.
inline double gaussian_dropout_expected_loss(const NetworkWeights& w, const Dataset& d, double sigma_d) {
    detail::require_two_layers(w);
    detail::require_compatible(w, d.x, d.y);
    if (!(sigma_d >= 0.0)) {
        throw InvalidInput("sigma_d must be >= 0");
    }
    const DenseMatrix out = w[1] * (w[0] * d.x);
    return (d.y - out).squaredNorm() + sigma_d * sigma_d * out.squaredNorm();
}

/// Exact expectation when every entry of W_2 gets an independent N(1, s^2)
/// factor: |Y - W_2 P|^2 + s^2 sum_l |W_2[:, l]|^2 |P[l, :]|^2 with P = W_1 X.
inline double gaussian_dropout_entrywise_expected_loss(const NetworkWeights& w, const Dataset& d,
                                                       double sigma_d) {
    detail::require_two_layers(w);
    detail::require_compatible(w, d.x, d.y);
    const DenseMatrix p = w[0] * d.x;
    const DenseMatrix out = w[1] * p;
    const double spread = w[1].colwise().squaredNorm().dot(p.rowwise().squaredNorm().transpose());
    return (d.y - out).squaredNorm() + sigma_d * sigma_d * spread;
}

/// E |Y - W_2 W_1 X (I + eps)|_F^2 = |Y - W_2 W_1 X|_F^2 + beta |W_2 W_1 X|_F^2
/// for any m x m eps with E[eps] = 0 and E[eps eps^T] = beta I (unhalved).
inline double input_noise_expected_loss(const NetworkWeights& w, const Dataset& d, double beta) {
    detail::require_two_layers(w);
    detail::require_compatible(w, d.x, d.y);
    if (!(beta >= 0.0)) {
        throw InvalidInput("beta must be >= 0");
    }
    const DenseMatrix out = w[1] * (w[0] * d.x);
    return (d.y - out).squaredNorm() + beta * out.squaredNorm();
}

/// Additive input noise with E[eps eps^T] = beta I: i.i.d. N(0, beta / m) entries.
inline DenseMatrix sample_input_noise(Eigen::Index rows, Eigen::Index samples, double beta, RngStream& rng) {
    return rng.gaussian(rows, samples, 0.0, std::sqrt(beta / static_cast<double>(samples)));
}

} // namespace ranktrace
