#include <gtest/gtest.h>

#include "geomerge/linalg.hpp"
#include "test_util.hpp"

using namespace geomerge;
using gmtest::from_rows;
using gmtest::gaussian;

TEST(QrCompact, ReconstructsAndNormalizes) {
  const DenseMatrix M = gaussian(9, 4, 11);
  const QrResult qr = qr_compact(M);
  EXPECT_EQ(qr.Q.rows(), 9);
  EXPECT_EQ(qr.Q.cols(), 4);
  EXPECT_LT(orthonormality_defect(qr.Q), 1e-13);
  EXPECT_MAT_NEAR(qr.Q * qr.R, M, 1e-12);
  for (Index j = 0; j < 4; ++j) {
    EXPECT_GE(qr.R(j, j), 0.0);
    for (Index i = j + 1; i < 4; ++i) EXPECT_EQ(qr.R(i, j), 0.0);
  }
}

TEST(QrCompact, RejectsWideInput) {
  EXPECT_THROW(qr_compact(gaussian(3, 5, 12)), dimension_error);
}

TEST(SvdThin, ReconstructsWithOrderedSpectrum) {
  const DenseMatrix M = gaussian(7, 5, 13);
  const SvdResult svd = svd_thin(M);
  EXPECT_MAT_NEAR(svd.U * svd.S.asDiagonal() * svd.V.transpose(), M, 1e-12);
  EXPECT_LT(orthonormality_defect(svd.U), 1e-13);
  EXPECT_LT(orthonormality_defect(svd.V), 1e-13);
  for (Index i = 1; i < svd.S.size(); ++i) EXPECT_LE(svd.S(i), svd.S(i - 1));
  EXPECT_GE(svd.S(svd.S.size() - 1), 0.0);
}

TEST(EigSym, AscendingAndReconstructs) {
  const DenseMatrix S = sym_part(gaussian(6, 6, 14));
  const EigResult eig = eig_sym(S);
  EXPECT_MAT_NEAR(eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose(), S, 1e-12);
  for (Index i = 1; i < eig.values.size(); ++i) EXPECT_LE(eig.values(i - 1), eig.values(i));
}

TEST(EigSym, RejectsAsymmetricInput) {
  DenseMatrix M = sym_part(gaussian(4, 4, 15));
  M(0, 1) += 1e-6;
  EXPECT_THROW(eig_sym(M), invalid_input);
}

TEST(Expm, NilpotentAndRotation) {
  EXPECT_MAT_NEAR(expm(from_rows({{0, 1}, {0, 0}})), from_rows({{1, 1}, {0, 1}}), 1e-15);
  EXPECT_MAT_NEAR(expm(DenseMatrix::Zero(3, 3)), DenseMatrix::Identity(3, 3), 1e-15);
  const double th = 0.9;
  EXPECT_MAT_NEAR(expm(from_rows({{0, -th}, {th, 0}})),
                  from_rows({{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}}),
                  1e-14);
}

TEST(LogmSpd, DiagonalAndRoundtrip) {
  DenseMatrix D = DenseMatrix::Zero(2, 2);
  D(0, 0) = std::exp(1.0);
  D(1, 1) = std::exp(2.0);
  EXPECT_MAT_NEAR(logm_spd(D), from_rows({{1, 0}, {0, 2}}), 1e-13);
  const DenseMatrix S = 0.4 * sym_part(gaussian(5, 5, 16));
  EXPECT_MAT_NEAR(logm_spd(expm(S)), S, 1e-12);
}

TEST(LogmSpd, RejectsNonSpd) {
  DenseMatrix M = DenseMatrix::Identity(2, 2);
  M(1, 1) = -0.5;
  EXPECT_THROW(logm_spd(M), spd_domain_error);
  EXPECT_THROW(logm_spd(DenseMatrix::Zero(2, 2)), spd_domain_error);
}

TEST(SqrtmSpd, SquaresBack) {
  const DenseMatrix B = gmtest::spd(4, 17);
  const DenseMatrix R = sqrtm_spd(B);
  EXPECT_MAT_NEAR(R * R, B, 1e-12);
  EXPECT_MAT_NEAR(invsqrtm_spd(B) * R, DenseMatrix::Identity(4, 4), 1e-12);
}

TEST(PolarOrthogonal, ProjectsToNearestRotation) {
  const DenseMatrix Q0 = gmtest::orthonormal(4, 4, 18);
  EXPECT_MAT_NEAR(polar_orthogonal(Q0), Q0, 1e-13);
  const DenseMatrix M = gaussian(4, 4, 19);
  const DenseMatrix Q = polar_orthogonal(M);
  EXPECT_LT(orthonormality_defect(Q), 1e-13);
  // Q^T M is the SPD polar factor: symmetric with positive spectrum.
  const DenseMatrix P = Q.transpose() * M;
  EXPECT_LT((P - P.transpose()).norm(), 1e-12);
  EXPECT_GT(eig_sym(sym_part(P)).values.minCoeff(), 0.0);
}

TEST(PolarOrthogonal, RejectsSingular) {
  DenseMatrix M = DenseMatrix::Zero(3, 3);
  M(0, 0) = 1.0;
  EXPECT_THROW(polar_orthogonal(M), degenerate_alignment_error);
}

TEST(RandOrthonormal, DeterministicPerSeed) {
  const DenseMatrix A = rand_orthonormal(10, 3, 42);
  const DenseMatrix B = rand_orthonormal(10, 3, 42);
  EXPECT_EQ((A - B).norm(), 0.0);
  EXPECT_LT(orthonormality_defect(A), 1e-13);
  EXPECT_GT((A - rand_orthonormal(10, 3, 43)).norm(), 1e-3);
}

TEST(SpanFactor, RankRevealingFactorization) {
  DenseMatrix M(8, 4);
  M.col(0) = gaussian(8, 1, 20);
  M.col(1) = 2.0 * M.col(0);
  M.col(2) = gaussian(8, 1, 21);
  M.col(3) = M.col(0) - 0.5 * M.col(2);
  const SpanFactor sf = span_factor(M);
  EXPECT_EQ(sf.E.cols(), 2);
  EXPECT_LT(orthonormality_defect(sf.E), 1e-12);
  EXPECT_MAT_NEAR(sf.E * sf.G, M, 1e-12);
}

TEST(SpanFactor, ZeroInputGivesEmptyFactor) {
  const SpanFactor sf = span_factor(DenseMatrix::Zero(6, 3));
  EXPECT_EQ(sf.E.cols(), 0);
  EXPECT_EQ(sf.G.rows(), 0);
}

TEST(Helpers, SymSkewSplitAndDefect) {
  const DenseMatrix M = gaussian(5, 5, 22);
  EXPECT_MAT_NEAR(sym_part(M) + skew_part(M), M, 1e-15);
  EXPECT_MAT_NEAR(sym_part(M), sym_part(M).transpose(), 1e-15);
  EXPECT_MAT_NEAR(skew_part(M), DenseMatrix(-skew_part(M).transpose()), 1e-15);
  EXPECT_LT(orthonormality_defect(gmtest::orthonormal(7, 3, 23)), 1e-13);
  DenseMatrix bad(2, 2);
  bad << 1.0, 0.0, 0.0, std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(is_finite(bad));
  EXPECT_THROW(require_finite(bad, "bad"), invalid_input);
}
