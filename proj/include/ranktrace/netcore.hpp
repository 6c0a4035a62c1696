#pragma once

// Fully connected bias-free networks W_H ... W_1 acting on column samples,
// the unnormalized squared loss 1/2 |f(X) - Y|_F^2 and its gradients.

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ranktrace/error.hpp"
#include "ranktrace/linalg.hpp"

namespace ranktrace {

/// Unit counts d_0 (input) .. d_H (output).
class LayerDims {
public:
    LayerDims() = default;
    explicit LayerDims(std::vector<Eigen::Index> dims) : dims_(std::move(dims)) {
        if (dims_.size() < 2) {
            throw InvalidInput("LayerDims needs at least an input and an output width");
        }
        for (auto d : dims_) {
            if (d <= 0) {
                throw InvalidInput("LayerDims entries must be positive");
            }
        }
    }
    LayerDims(std::initializer_list<Eigen::Index> dims) : LayerDims(std::vector<Eigen::Index>(dims)) {}

    /// Accepts "1000x500x250" or "1000,500,250".
    static LayerDims parse(std::string_view text) {
        std::vector<Eigen::Index> out;
        std::string token;
        auto flush = [&] {
            if (token.empty()) {
                throw InvalidInput("malformed layer dims: '" + std::string(text) + "'");
            }
            std::size_t used = 0;
            long long v = 0;
            try {
                v = std::stoll(token, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != token.size()) {
                throw InvalidInput("malformed layer dims: '" + std::string(text) + "'");
            }
            out.push_back(static_cast<Eigen::Index>(v));
            token.clear();
        };
        for (char c : text) {
            if (c == 'x' || c == 'X' || c == ',') {
                flush();
            } else if (c != ' ') {
                token.push_back(c);
            }
        }
        flush();
        return LayerDims(std::move(out));
    }

    [[nodiscard]] std::string to_string() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            os << (i ? "x" : "") << dims_[i];
        }
        return os.str();
    }

    [[nodiscard]] std::size_t depth() const noexcept { return dims_.empty() ? 0 : dims_.size() - 1; }
    [[nodiscard]] Eigen::Index input() const { return dims_.front(); }
    [[nodiscard]] Eigen::Index output() const { return dims_.back(); }
    [[nodiscard]] Eigen::Index operator[](std::size_t i) const { return dims_.at(i); }
    [[nodiscard]] const std::vector<Eigen::Index>& values() const noexcept { return dims_; }
    [[nodiscard]] Eigen::Index min_width() const { return *std::min_element(dims_.begin(), dims_.end()); }

    bool operator==(const LayerDims&) const = default;

private:
    std::vector<Eigen::Index> dims_;
};

/// Ordered weights W_1 .. W_H, W_i of shape d_i x d_{i-1}. Layer i (0-based)
/// in the API is W_{i+1}.
class NetworkWeights {
public:
    NetworkWeights() = default;
    explicit NetworkWeights(std::vector<DenseMatrix> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) {
            throw InvalidInput("network needs at least one layer");
        }
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            require_non_empty(layers_[i], "weight matrix");
            require_finite(layers_[i], "weight matrix");
            if (i > 0 && layers_[i].cols() != layers_[i - 1].rows()) {
                throw InvalidInput("weight shapes do not chain at layer " + std::to_string(i + 1));
            }
        }
    }

    [[nodiscard]] std::size_t depth() const noexcept { return layers_.size(); }
    [[nodiscard]] const DenseMatrix& operator[](std::size_t i) const { return layers_.at(i); }
    [[nodiscard]] DenseMatrix& layer(std::size_t i) { return layers_.at(i); }
    [[nodiscard]] const std::vector<DenseMatrix>& layers() const noexcept { return layers_; }
    [[nodiscard]] Eigen::Index input_dim() const { return layers_.front().cols(); }
    [[nodiscard]] Eigen::Index output_dim() const { return layers_.back().rows(); }

    [[nodiscard]] LayerDims dims() const {
        std::vector<Eigen::Index> d{layers_.front().cols()};
        for (const auto& w : layers_) {
            d.push_back(w.rows());
        }
        return LayerDims(std::move(d));
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& w : layers_) {
            n += static_cast<std::size_t>(w.size());
        }
        return n;
    }

private:
    std::vector<DenseMatrix> layers_;
};

enum class ActivationKind { linear, sigmoid, tanh };

/// Elementwise nonlinearity at the hidden layers, optionally also at the output.
struct Activation {
    ActivationKind kind = ActivationKind::linear;
    bool at_output = false;

    [[nodiscard]] bool is_linear() const noexcept { return kind == ActivationKind::linear; }

    static ActivationKind parse_kind(std::string_view s) {
        if (s == "linear") return ActivationKind::linear;
        if (s == "sigmoid") return ActivationKind::sigmoid;
        if (s == "tanh") return ActivationKind::tanh;
        throw InvalidInput("unknown activation '" + std::string(s) + "'");
    }
};

inline std::string_view to_string(ActivationKind k) {
    switch (k) {
    case ActivationKind::linear: return "linear";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::tanh: return "tanh";
    }
    return "?";
}

/// Columns are samples: X is d_x x m, Y is d_y x m.
struct Dataset {
    DenseMatrix x;
    DenseMatrix y;

    [[nodiscard]] Eigen::Index samples() const noexcept { return x.cols(); }
    [[nodiscard]] Eigen::Index input_dim() const noexcept { return x.rows(); }
    [[nodiscard]] Eigen::Index output_dim() const noexcept { return y.rows(); }

    void validate() const {
        require_non_empty(x, "dataset X");
        require_non_empty(y, "dataset Y");
        require_finite(x, "dataset X");
        require_finite(y, "dataset Y");
        if (x.cols() != y.cols()) {
            throw InvalidInput("dataset X and Y have different sample counts");
        }
    }
};

namespace detail {

inline void require_compatible(const NetworkWeights& w, const DenseMatrix& x, const DenseMatrix& y) {
    if (w.depth() == 0) {
        throw InvalidInput("empty network");
    }
    if (x.rows() != w.input_dim() || y.rows() != w.output_dim() || x.cols() != y.cols()) {
        throw InvalidInput("network and dataset shapes are incompatible");
    }
}

inline void apply_activation(ActivationKind k, DenseMatrix& m) {
    switch (k) {
    case ActivationKind::linear: break;
    case ActivationKind::sigmoid: m = (1.0 + (-m.array()).exp()).inverse().matrix(); break;
    case ActivationKind::tanh: m = m.array().tanh().matrix(); break;
    }
}

// Derivative expressed through the activation output.
inline DenseMatrix activation_slope(ActivationKind k, const DenseMatrix& out) {
    switch (k) {
    case ActivationKind::linear: return DenseMatrix::Ones(out.rows(), out.cols());
    case ActivationKind::sigmoid: return (out.array() * (1.0 - out.array())).matrix();
    case ActivationKind::tanh: return (1.0 - out.array().square()).matrix();
    }
    return {};
}

inline bool activated(const Activation& act, std::size_t layer, std::size_t depth) {
    return !act.is_linear() && (layer + 1 < depth || act.at_output);
}

} // namespace detail

/// R = W_H ... W_1 (d_y x d_x).
inline DenseMatrix product_matrix(const NetworkWeights& w) {
    if (w.depth() == 0) {
        throw InvalidInput("empty network");
    }
    DenseMatrix r = w[0];
    for (std::size_t i = 1; i < w.depth(); ++i) {
        r = w[i] * r;
    }
    return r;
}

/// Per-layer intermediate values of a forward pass. inputs[k] is the
/// (possibly masked) matrix fed to layer k, outputs[k] its activated output.
struct ForwardTrace {
    std::vector<DenseMatrix> inputs;
    std::vector<DenseMatrix> outputs;
};

/// Forward pass. `masks`, when non-empty, holds one multiplicative mask per
/// hidden representation (H-1 of them) applied before the next layer.
inline ForwardTrace forward_trace(const NetworkWeights& w, const Activation& act, const DenseMatrix& x,
                                  std::span<const DenseMatrix> masks = {}) {
    const std::size_t depth = w.depth();
    if (!masks.empty() && masks.size() + 1 != depth) {
        throw InvalidInput("forward: need one mask per hidden layer");
    }
    ForwardTrace t;
    t.inputs.reserve(depth);
    t.outputs.reserve(depth);
    for (std::size_t k = 0; k < depth; ++k) {
        if (k == 0) {
            t.inputs.push_back(x);
        } else if (masks.empty()) {
            t.inputs.push_back(t.outputs.back());
        } else {
            const DenseMatrix& mask = masks[k - 1];
            if (mask.rows() != t.outputs.back().rows() || mask.cols() != t.outputs.back().cols()) {
                throw InvalidInput("forward: mask shape mismatch");
            }
            t.inputs.push_back(t.outputs.back().cwiseProduct(mask));
        }
        DenseMatrix out = w[k] * t.inputs.back();
        if (detail::activated(act, k, depth)) {
            detail::apply_activation(act.kind, out);
        }
        t.outputs.push_back(std::move(out));
    }
    return t;
}

inline DenseMatrix forward(const NetworkWeights& w, const Activation& act, const DenseMatrix& x) {
    if (act.is_linear()) {
        return product_matrix(w) * x;
    }
    return std::move(forward_trace(w, act, x).outputs.back());
}

/// 1/2 |R X - Y|_F^2 for the linear network.
inline double squared_loss(const NetworkWeights& w, const Dataset& d) {
    detail::require_compatible(w, d.x, d.y);
    return 0.5 * (product_matrix(w) * d.x - d.y).squaredNorm();
}

inline double squared_loss(const NetworkWeights& w, const Activation& act, const Dataset& d) {
    detail::require_compatible(w, d.x, d.y);
    return 0.5 * (forward(w, act, d.x) - d.y).squaredNorm();
}

/// Gradients of the linear-network loss for every layer given the residual
/// RX - Y, using dL/dW_i = W_{i+1}^T..W_H^T (RX - Y) X^T W_1^T..W_{i-1}^T.
inline std::vector<DenseMatrix> closed_form_gradients_from_residual(const NetworkWeights& w, const DenseMatrix& x,
                                                                    const DenseMatrix& residual) {
    detail::require_compatible(w, x, residual);
    const std::size_t depth = w.depth();
    const DenseMatrix residual_cov = residual * x.transpose(); // d_y x d_x

    // left[i] = (W_H .. W_{i+2})^T (RX - Y) X^T, shape d_{i+1} x d_x
    std::vector<DenseMatrix> left(depth);
    left[depth - 1] = residual_cov;
    for (std::size_t i = depth - 1; i-- > 0;) {
        left[i] = w[i + 1].transpose() * left[i + 1];
    }
    std::vector<DenseMatrix> grads(depth);
    grads[0] = std::move(left[0]);
    DenseMatrix prefix = w[0];
    for (std::size_t i = 1; i < depth; ++i) {
        grads[i] = left[i] * prefix.transpose();
        if (i + 1 < depth) {
            prefix = w[i] * prefix;
        }
    }
    return grads;
}

inline std::vector<DenseMatrix> closed_form_gradients(const NetworkWeights& w, const DenseMatrix& x,
                                                      const DenseMatrix& y) {
    detail::require_compatible(w, x, y);
    return closed_form_gradients_from_residual(w, x, product_matrix(w) * x - y);
}

inline std::vector<DenseMatrix> closed_form_gradients(const NetworkWeights& w, const Dataset& d) {
    return closed_form_gradients(w, d.x, d.y);
}

/// Single-layer closed-form gradient. Only defined for linear networks.
inline DenseMatrix closed_form_gradient(const NetworkWeights& w, const Dataset& d, std::size_t layer,
                                        const Activation& act = {}) {
    if (!act.is_linear()) {
        throw UnsupportedActivation("closed-form gradient exists only for linear networks");
    }
    detail::require_compatible(w, d.x, d.y);
    if (layer >= w.depth()) {
        throw InvalidInput("layer index out of range");
    }
    DenseMatrix left = DenseMatrix::Identity(w.output_dim(), w.output_dim());
    for (std::size_t k = w.depth() - 1; k > layer; --k) {
        left = left * w[k];
    }
    DenseMatrix right = DenseMatrix::Identity(w.input_dim(), w.input_dim());
    for (std::size_t k = 0; k < layer; ++k) {
        right = w[k] * right;
    }
    return left.transpose() * (product_matrix(w) * d.x - d.y) * d.x.transpose() * right.transpose();
}

/// Reverse-mode gradients for any activation, optionally with hidden masks
/// (dropout). Returns one gradient per layer.
inline std::vector<DenseMatrix> backprop_gradients(const NetworkWeights& w, const Activation& act,
                                                   const DenseMatrix& x, const DenseMatrix& y,
                                                   std::span<const DenseMatrix> masks = {}) {
    detail::require_compatible(w, x, y);
    const std::size_t depth = w.depth();
    const ForwardTrace t = forward_trace(w, act, x, masks);

    std::vector<DenseMatrix> grads(depth);
    DenseMatrix delta = t.outputs.back() - y;
    for (std::size_t k = depth; k-- > 0;) {
        if (detail::activated(act, k, depth)) {
            delta = delta.cwiseProduct(detail::activation_slope(act.kind, t.outputs[k]));
        }
        grads[k] = delta * t.inputs[k].transpose();
        if (k > 0) {
            delta = w[k].transpose() * delta;
            if (!masks.empty()) {
                delta = delta.cwiseProduct(masks[k - 1]);
            }
        }
    }
    return grads;
}

inline std::vector<DenseMatrix> backprop_gradients(const NetworkWeights& w, const Activation& act,
                                                   const Dataset& d) {
    return backprop_gradients(w, act, d.x, d.y);
}

/// Central differences of the loss with respect to every entry of one layer.
inline DenseMatrix finite_difference_gradient(const NetworkWeights& w, const Activation& act, const Dataset& d,
                                              std::size_t layer, double step = 1e-6) {
    detail::require_compatible(w, d.x, d.y);
    if (layer >= w.depth()) {
        throw InvalidInput("layer index out of range");
    }
    NetworkWeights probe = w;
    DenseMatrix& target = probe.layer(layer);
    DenseMatrix grad(target.rows(), target.cols());
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
        for (Eigen::Index i = 0; i < target.rows(); ++i) {
            const double saved = target(i, j);
            target(i, j) = saved + step;
            const double up = squared_loss(probe, act, d);
            target(i, j) = saved - step;
            const double down = squared_loss(probe, act, d);
            target(i, j) = saved;
            grad(i, j) = (up - down) / (2.0 * step);
        }
    }
    return grad;
}

/// Least-squares floor 1/2 |Y - Y X^T (X X^T)^{-1} X|_F^2, the global
/// minimum of the linear network when its narrowest layer is min(d_x, d_y).
inline double optimal_loss(const Dataset& d, RankTolerance tol = {}) {
    d.validate();
    if (d.input_dim() > d.samples() || numerical_rank(d.x * d.x.transpose(), tol) < d.input_dim()) {
        throw AssumptionViolated("optimal_loss: X X^T is singular");
    }
    const DenseMatrix mt = d.x.transpose().householderQr().solve(d.y.transpose());
    return 0.5 * (d.y - mt.transpose() * d.x).squaredNorm();
}

} // namespace ranktrace
