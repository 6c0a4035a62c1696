#pragma once

// Dense matrix primitives: SVD, tolerance-based numerical rank, the
// singular-value rank bump and the trace cosine between matrices.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <lapacke.h>

#include "ranktrace/error.hpp"

namespace ranktrace {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SvdFactors {
    DenseMatrix u;           // m x p
    Vector singular_values;  // length p = min(m, n), descending
    DenseMatrix v;           // n x p
};

/// Relative cut-off for counting singular values: sigma_i > threshold * sigma_1.
class RankTolerance {
public:
    constexpr RankTolerance() = default;
    explicit RankTolerance(double relative_threshold) : threshold_(relative_threshold) {
        if (!(relative_threshold > 0.0 && relative_threshold < 1.0)) {
            throw InvalidInput("rank tolerance must lie in (0, 1)");
        }
    }
    [[nodiscard]] constexpr double relative_threshold() const noexcept { return threshold_; }

private:
    double threshold_ = 1e-9;
};

inline void require_finite(const DenseMatrix& a, const char* what) {
    if (!a.allFinite()) {
        throw InvalidInput(std::string(what) + " contains non-finite entries");
    }
}

inline void require_non_empty(const DenseMatrix& a, const char* what) {
    if (a.rows() == 0 || a.cols() == 0) {
        throw InvalidInput(std::string(what) + " is empty");
    }
}

namespace detail {

// Divide-and-conquer LAPACK SVD. Overwrites `work`.
inline lapack_int gesdd(char job, DenseMatrix& work, Vector& s, DenseMatrix* u, DenseMatrix* vt) {
    const auto m = static_cast<lapack_int>(work.rows());
    const auto n = static_cast<lapack_int>(work.cols());
    s.resize(std::min(m, n));
    double* up = u ? u->data() : nullptr;
    double* vtp = vt ? vt->data() : nullptr;
    const lapack_int ldu = u ? static_cast<lapack_int>(u->rows()) : 1;
    const lapack_int ldvt = vt ? static_cast<lapack_int>(vt->rows()) : 1;
    return LAPACKE_dgesdd(LAPACK_COL_MAJOR, job, m, n, work.data(), m, s.data(), up, ldu, vtp, ldvt);
}

} // namespace detail

/// Thin SVD, A = U diag(s) V^T.
inline SvdFactors svd(const DenseMatrix& a) {
    require_non_empty(a, "svd input");
    require_finite(a, "svd input");
    const Eigen::Index p = std::min(a.rows(), a.cols());
    DenseMatrix work = a;
    SvdFactors f;
    f.u.resize(a.rows(), p);
    DenseMatrix vt(p, a.cols());
    if (detail::gesdd('S', work, f.singular_values, &f.u, &vt) != 0) {
        throw Error("svd did not converge");
    }
    f.v = vt.transpose();
    return f;
}

inline Vector singular_values(const DenseMatrix& a) {
    require_non_empty(a, "svd input");
    require_finite(a, "svd input");
    DenseMatrix work = a;
    Vector s;
    if (detail::gesdd('N', work, s, nullptr, nullptr) != 0) {
        throw Error("svd did not converge");
    }
    return s;
}

/// Number of leading entries of a descending spectrum above tol * s(0).
inline int rank_of_spectrum(const Vector& s, RankTolerance tol = {}) {
    if (s.size() == 0 || s(0) <= 0.0) {
        return 0;
    }
    const double cut = tol.relative_threshold() * s(0);
    int r = 0;
    while (r < s.size() && s(r) > cut) {
        ++r;
    }
    return r;
}

inline int numerical_rank(const DenseMatrix& a, RankTolerance tol = {}) {
    return rank_of_spectrum(singular_values(a), tol);
}

inline double spectral_norm(const DenseMatrix& a) {
    return singular_values(a)(0);
}

/// Raise the numerical rank of A by one: keep sigma_1..sigma_r, set the
/// (r+1)-th singular value to eps and zero the rest. The result sits at
/// spectral distance eps from A (up to the discarded sub-threshold tail).
///
/// Requires rank(A) < min(rows, cols) and 0 < eps < sigma_r so the new
/// spectrum stays descending. For the zero matrix eps becomes sigma_1 along
/// the first coordinate axes.
inline DenseMatrix rank_bump(const DenseMatrix& a, double eps, RankTolerance tol = {}) {
    require_non_empty(a, "rank_bump input");
    require_finite(a, "rank_bump input");
    if (!(eps > 0.0) || !std::isfinite(eps)) {
        throw InvalidInput("rank_bump requires a finite eps > 0");
    }
    const Eigen::Index p = std::min(a.rows(), a.cols());
    const SvdFactors f = svd(a);
    const int r = rank_of_spectrum(f.singular_values, tol);
    if (r >= p) {
        throw FullRankError("rank_bump: matrix already has full rank");
    }
    if (r == 0) {
        DenseMatrix out = DenseMatrix::Zero(a.rows(), a.cols());
        out(0, 0) = eps;
        return out;
    }
    if (eps >= f.singular_values(r - 1)) {
        throw PerturbationTooLarge("rank_bump: eps must be smaller than the smallest retained singular value");
    }
    Vector s = Vector::Zero(p);
    s.head(r) = f.singular_values.head(r);
    s(r) = eps;
    return f.u * s.asDiagonal() * f.v.transpose();
}

/// trace(A^T B) / (|A|_F |B|_F), clamped to [-1, 1].
inline double matrix_cosine(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw InvalidInput("matrix_cosine: shape mismatch");
    }
    require_non_empty(a, "matrix_cosine input");
    require_finite(a, "matrix_cosine input");
    require_finite(b, "matrix_cosine input");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        throw DegenerateInput("matrix_cosine: zero matrix has no direction");
    }
    const double c = a.cwiseProduct(b).sum() / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

} // namespace ranktrace
