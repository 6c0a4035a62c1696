#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "ranktrace/linalg.hpp"
#include "ranktrace/rng.hpp"

using namespace ranktrace;

namespace {

// Reference spectrum from Eigen's one-sided Jacobi SVD, independent of LAPACK.
Vector jacobi_singular_values(const DenseMatrix& a) {
    return Eigen::JacobiSVD<DenseMatrix>(a).singularValues();
}

DenseMatrix random_orthogonal(Eigen::Index n, RngStream& rng) {
    Eigen::HouseholderQR<DenseMatrix> qr(rng.gaussian(n, n));
    return qr.householderQ() * DenseMatrix::Identity(n, n);
}

DenseMatrix random_of_rank(Eigen::Index rows, Eigen::Index cols, Eigen::Index r, RngStream& rng) {
    if (r == 0) return DenseMatrix::Zero(rows, cols);
    return rng.gaussian(rows, r) * rng.gaussian(r, cols);
}

} // namespace

TEST(Svd, IdentityHasUnitSpectrum) {
    const SvdFactors f = svd(DenseMatrix::Identity(3, 3));
    EXPECT_EQ(f.singular_values.size(), 3);
    for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(f.singular_values(i), 1.0);
}

TEST(Svd, DiagonalWithZero) {
    DenseMatrix a = DenseMatrix::Zero(2, 2);
    a(0, 0) = 3.0;
    const Vector s = svd(a).singular_values;
    EXPECT_NEAR(s(0), 3.0, 1e-15);
    EXPECT_NEAR(s(1), 0.0, 1e-15);
}

TEST(Svd, RandomFactorsReconstructAndAreOrthonormal) {
    RngStream rng(5);
    const DenseMatrix a = rng.gaussian(5, 4);
    const SvdFactors f = svd(a);
    ASSERT_EQ(f.u.rows(), 5);
    ASSERT_EQ(f.u.cols(), 4);
    ASSERT_EQ(f.v.rows(), 4);
    ASSERT_EQ(f.v.cols(), 4);
    const DenseMatrix back = f.u * f.singular_values.asDiagonal() * f.v.transpose();
    EXPECT_LT((back - a).norm() / a.norm(), 1e-8);
    EXPECT_LT((f.u.transpose() * f.u - DenseMatrix::Identity(4, 4)).norm(), 1e-10);
    EXPECT_LT((f.v.transpose() * f.v - DenseMatrix::Identity(4, 4)).norm(), 1e-10);
    const Vector ref = jacobi_singular_values(a);
    EXPECT_LT((f.singular_values - ref).norm(), 1e-12 * ref(0));
}

TEST(Svd, SpectrumIsDescendingAndNonNegative) {
    RngStream rng(6);
    for (int t = 0; t < 20; ++t) {
        const Vector s = singular_values(rng.gaussian(rng.uniform_int(1, 9), rng.uniform_int(1, 9)));
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            EXPECT_GE(s(i), 0.0);
            if (i > 0) EXPECT_LE(s(i), s(i - 1));
        }
    }
}

TEST(Svd, LargeReconstruction) {
    RngStream rng(7);
    const DenseMatrix a = rng.gaussian(1000, 500);
    const SvdFactors f = svd(a);
    const DenseMatrix back = f.u * f.singular_values.asDiagonal() * f.v.transpose();
    EXPECT_LT((back - a).norm() / a.norm(), 1e-8);
}

TEST(Svd, RankDeficientProductDoesNotFail) {
    RngStream rng(8);
    const DenseMatrix a = random_of_rank(250, 1000, 100, rng);
    const Vector s = singular_values(a);
    EXPECT_EQ(rank_of_spectrum(s), 100);
}

TEST(Svd, RejectsNonFiniteAndEmpty) {
    DenseMatrix a = DenseMatrix::Identity(2, 2);
    a(1, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(svd(a), InvalidInput);
    a(1, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(numerical_rank(a), InvalidInput);
    EXPECT_THROW(svd(DenseMatrix(0, 3)), InvalidInput);
}

TEST(NumericalRank, Examples) {
    EXPECT_EQ(numerical_rank(DenseMatrix::Identity(3, 3)), 3);
    DenseMatrix tiny = DenseMatrix::Zero(2, 2);
    tiny(0, 0) = 1.0;
    tiny(1, 1) = 1e-16;
    EXPECT_EQ(numerical_rank(tiny), 1);
    DenseMatrix two = DenseMatrix::Zero(2, 2);
    two(0, 0) = 3.0;
    two(1, 1) = 0.5;
    EXPECT_EQ(numerical_rank(two), 2);
    EXPECT_EQ(numerical_rank(DenseMatrix::Zero(4, 3)), 0);
}

TEST(NumericalRank, ToleranceIsConfigurable) {
    DenseMatrix a = DenseMatrix::Zero(2, 2);
    a(0, 0) = 1.0;
    a(1, 1) = 1e-6;
    EXPECT_EQ(numerical_rank(a), 2);
    EXPECT_EQ(numerical_rank(a, RankTolerance(1e-5)), 1);
    EXPECT_THROW(RankTolerance(0.0), InvalidInput);
    EXPECT_THROW(RankTolerance(1.0), InvalidInput);
    EXPECT_THROW(RankTolerance(-1e-3), InvalidInput);
}

TEST(NumericalRank, InvariantUnderOrthogonalTransforms) {
    RngStream rng(9);
    for (int t = 0; t < 50; ++t) {
        const Eigen::Index m = rng.uniform_int(2, 15);
        const Eigen::Index n = rng.uniform_int(2, 15);
        const Eigen::Index r = rng.uniform_int(0, std::min(m, n));
        const DenseMatrix a = random_of_rank(m, n, r, rng);
        const DenseMatrix q1 = random_orthogonal(m, rng);
        const DenseMatrix q2 = random_orthogonal(n, rng);
        EXPECT_EQ(numerical_rank(a), r);
        EXPECT_EQ(numerical_rank(q1 * a * q2), r);
    }
}

TEST(SpectralNorm, MatchesLargestSingularValue) {
    RngStream rng(10);
    const DenseMatrix a = rng.gaussian(7, 4);
    EXPECT_NEAR(spectral_norm(a), jacobi_singular_values(a)(0), 1e-12);
}

TEST(RankBump, DiagonalExample) {
    DenseMatrix a = DenseMatrix::Zero(2, 2);
    a(0, 0) = 3.0;
    const DenseMatrix b = rank_bump(a, 0.5);
    DenseMatrix expected = a;
    expected(1, 1) = 0.5;
    EXPECT_LT((b - expected).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(jacobi_singular_values(a - b)(0), 0.5, 1e-10);
}

TEST(RankBump, ZeroMatrix) {
    const DenseMatrix b = rank_bump(DenseMatrix::Zero(2, 3), 1.0);
    EXPECT_EQ(numerical_rank(b), 1);
    const Vector s = jacobi_singular_values(b);
    EXPECT_DOUBLE_EQ(s(0), 1.0);
    EXPECT_DOUBLE_EQ(s(1), 0.0);
}

TEST(RankBump, RandomRankTwo) {
    RngStream rng(11);
    const DenseMatrix a = rng.gaussian(4, 1) * rng.gaussian(1, 4) + rng.gaussian(4, 1) * rng.gaussian(1, 4);
    ASSERT_EQ(numerical_rank(a), 2);
    const DenseMatrix b = rank_bump(a, 1e-3);
    EXPECT_EQ(numerical_rank(b), 3);
    EXPECT_NEAR(jacobi_singular_values(a - b)(0), 1e-3, 1e-10);
}

TEST(RankBump, Errors) {
    EXPECT_THROW(rank_bump(DenseMatrix::Identity(3, 3), 0.1), FullRankError);
    DenseMatrix a = DenseMatrix::Zero(2, 2);
    a(0, 0) = 3.0;
    EXPECT_THROW(rank_bump(a, 0.0), InvalidInput);
    EXPECT_THROW(rank_bump(a, -1.0), InvalidInput);
    EXPECT_THROW(rank_bump(a, std::numeric_limits<double>::quiet_NaN()), InvalidInput);
    EXPECT_THROW(rank_bump(a, 3.0), PerturbationTooLarge);
    EXPECT_THROW(rank_bump(a, 4.0), PerturbationTooLarge);
    EXPECT_NO_THROW(rank_bump(a, 2.999));
}

TEST(RankBump, PropertyOnRandomRankDeficientMatrices) {
    RngStream rng(12);
    for (int t = 0; t < 200; ++t) {
        const Eigen::Index m = rng.uniform_int(1, 20);
        const Eigen::Index n = rng.uniform_int(1, 20);
        const Eigen::Index r = rng.uniform_int(0, std::min(m, n) - 1);
        const DenseMatrix a = random_of_rank(m, n, r, rng);
        const Vector s = jacobi_singular_values(a);
        const double eps = r == 0 ? rng.uniform(0.1, 2.0) : rng.uniform(0.01, 0.99) * s(r - 1);
        const DenseMatrix b = rank_bump(a, eps);
        EXPECT_EQ(numerical_rank(b), r + 1) << "trial " << t;
        EXPECT_NEAR(jacobi_singular_values(a - b)(0), eps, 1e-10) << "trial " << t;
        if (r > 0) {
            const double sum_sq = s.head(r).squaredNorm();
            EXPECT_NEAR(matrix_cosine(a, b), std::sqrt(sum_sq / (sum_sq + eps * eps)), 1e-12);
            EXPECT_GT(matrix_cosine(a, b), 0.0);
        }
    }
}

TEST(MatrixCosine, Examples) {
    EXPECT_DOUBLE_EQ(matrix_cosine(DenseMatrix::Identity(2, 2), DenseMatrix::Identity(2, 2)), 1.0);
    DenseMatrix a = DenseMatrix::Zero(2, 2);
    DenseMatrix b = DenseMatrix::Zero(2, 2);
    a(0, 0) = 1.0;
    b(1, 1) = 1.0;
    EXPECT_DOUBLE_EQ(matrix_cosine(a, b), 0.0);
    EXPECT_DOUBLE_EQ(matrix_cosine(a, -a), -1.0);
}

TEST(MatrixCosine, BumpedDiagonalMatchesClosedForm) {
    DenseMatrix a = DenseMatrix::Zero(2, 2);
    a(0, 0) = 3.0;
    const DenseMatrix b = rank_bump(a, 0.5);
    const double trace_form = (a.transpose() * b).trace() / (a.norm() * b.norm());
    const double closed = std::sqrt(9.0 / 9.25);
    EXPECT_NEAR(trace_form, closed, 1e-12);
    EXPECT_NEAR(matrix_cosine(a, b), closed, 1e-12);
    EXPECT_NEAR(closed, 0.98639, 1e-5);
}

TEST(MatrixCosine, Errors) {
    EXPECT_THROW(matrix_cosine(DenseMatrix::Zero(2, 2), DenseMatrix::Identity(2, 2)), DegenerateInput);
    EXPECT_THROW(matrix_cosine(DenseMatrix::Identity(2, 2), DenseMatrix::Zero(2, 2)), DegenerateInput);
    EXPECT_THROW(matrix_cosine(DenseMatrix::Identity(2, 2), DenseMatrix::Identity(3, 3)), InvalidInput);
}

TEST(Rng, StreamsAreReproducibleAndDistinct) {
    RngStream a(42, 3);
    RngStream b(42, 3);
    RngStream c(42, 4);
    const DenseMatrix ga = a.gaussian(5, 5);
    EXPECT_EQ(ga, b.gaussian(5, 5));
    EXPECT_NE(ga, c.gaussian(5, 5));
    EXPECT_EQ(RngStream(1).fork(9).gaussian(3, 3), RngStream(1).fork(9).gaussian(3, 3));
}
