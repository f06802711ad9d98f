#pragma once
// Dense kernels shared by every geometric operation: compact QR, thin SVD,
// symmetric eigendecomposition, matrix exponential, SPD matrix functions,
// polar factor extraction, and a seeded orthonormal sampler.
//
// All functions are pure and deterministic; randomness enters only through
// an explicit seed.

#include "geomerge/core.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <random>

namespace geomerge {

// Eigenvalues of an SPD operand must exceed this fraction of the largest one.
inline constexpr double kSpdDomainFloor = 1e-12;
// Relative singular-value floor below which a square matrix is treated as
// singular by polar_orthogonal.
inline constexpr double kPolarSingularFloor = 1e-12;
// Largest tolerated relative asymmetry ||S - S^T||_F / ||S||_F in eig_sym.
inline constexpr double kEigAsymmetryTol = 1e-10;

struct QrResult {
  DenseMatrix Q;  // n x k, orthonormal columns
  DenseMatrix R;  // k x k, upper triangular, nonnegative diagonal
};

struct SvdResult {
  DenseMatrix U;  // n x m
  Vector S;       // m, nonincreasing, nonnegative
  DenseMatrix V;  // k x m
};

struct EigResult {
  Vector values;        // ascending
  DenseMatrix vectors;  // orthonormal columns, S = vectors * diag(values) * vectors^T
};

/// Compact QR of a tall matrix (rows >= cols).  The sign convention pins the
/// diagonal of R to be nonnegative so the factorization is unique for
/// full-rank input.
inline QrResult qr_compact(const DenseMatrix& M) {
  if (M.rows() < M.cols())
    throw dimension_error("qr_compact: need rows >= cols, got " + std::to_string(M.rows()) +
                          "x" + std::to_string(M.cols()));
  require_finite(M, "qr_compact");
  const Index n = M.rows(), k = M.cols();
  Eigen::HouseholderQR<DenseMatrix> qr(M);
  DenseMatrix Q = qr.householderQ() * DenseMatrix::Identity(n, k);
  DenseMatrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Index j = 0; j < k; ++j) {
    if (R(j, j) < 0.0) {
      R.row(j) = -R.row(j);
      Q.col(j) = -Q.col(j);
    }
  }
  return {std::move(Q), std::move(R)};
}

/// Thin SVD, M = U * diag(S) * V^T with m = min(rows, cols) columns on each
/// side and singular values sorted nonincreasing.
inline SvdResult svd_thin(const DenseMatrix& M) {
  require_finite(M, "svd_thin");
  Eigen::JacobiSVD<DenseMatrix> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

/// Eigendecomposition of a symmetric matrix; eigenvalues ascending.  The
/// input is symmetrized internally but must already be symmetric within
/// kEigAsymmetryTol relative.
inline EigResult eig_sym(const DenseMatrix& S) {
  require_square(S, "eig_sym");
  require_finite(S, "eig_sym");
  const double nrm = S.norm();
  if ((S - S.transpose()).norm() > kEigAsymmetryTol * (nrm > 0 ? nrm : 1.0))
    throw invalid_input("eig_sym: input is not symmetric");
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(sym_part(S));
  if (es.info() != Eigen::Success) throw geomerge_error("eig_sym: eigensolver failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

/// Matrix exponential (scaling-and-squaring with Pade approximant).
inline DenseMatrix expm(const DenseMatrix& M) {
  require_square(M, "expm");
  require_finite(M, "expm");
  return M.exp();
}

namespace detail {

// Shared guard: eigendecompose B, reject eigenvalues at or below the SPD
// domain floor, and return f applied to the spectrum.
template <class F>
DenseMatrix spd_spectral_map(const DenseMatrix& B, const char* who, F f) {
  EigResult eg = eig_sym(B);
  const double lmax = eg.values(eg.values.size() - 1);
  const double floor = kSpdDomainFloor * (lmax > 0 ? lmax : 0.0);
  if (lmax <= 0.0 || eg.values(0) <= floor)
    throw spd_domain_error(std::string(who) + ": matrix is not positive definite (eigenvalues in [" +
                           std::to_string(eg.values(0)) + ", " + std::to_string(lmax) + "])");
  Vector mapped = eg.values.unaryExpr(f);
  DenseMatrix out = eg.vectors * mapped.asDiagonal() * eg.vectors.transpose();
  return sym_part(out);
}

}  // namespace detail

/// Principal logarithm of an SPD matrix.
inline DenseMatrix logm_spd(const DenseMatrix& B) {
  return detail::spd_spectral_map(B, "logm_spd", [](double l) { return std::log(l); });
}

/// Principal square root of an SPD matrix.
inline DenseMatrix sqrtm_spd(const DenseMatrix& B) {
  return detail::spd_spectral_map(B, "sqrtm_spd", [](double l) { return std::sqrt(l); });
}

/// Inverse principal square root of an SPD matrix.
inline DenseMatrix invsqrtm_spd(const DenseMatrix& B) {
  return detail::spd_spectral_map(B, "invsqrtm_spd", [](double l) { return 1.0 / std::sqrt(l); });
}

/// Orthogonal polar factor of a square nonsingular matrix: the orthogonal R
/// maximizing trace(R^T M).
inline DenseMatrix polar_orthogonal(const DenseMatrix& M) {
  require_square(M, "polar_orthogonal");
  require_finite(M, "polar_orthogonal");
  SvdResult svd = svd_thin(M);
  const double smax = svd.S(0);
  if (smax <= 0.0 || svd.S(svd.S.size() - 1) <= kPolarSingularFloor * smax)
    throw degenerate_alignment_error("polar_orthogonal: singular input");
  return svd.U * svd.V.transpose();
}

struct SpanFactor {
  DenseMatrix E;  // rows x k, orthonormal columns spanning range(M)
  DenseMatrix G;  // k x cols, M = E * G up to dropped noise directions
};

/// Exact thin span factorization M = E * G with orthonormal E.  Tall inputs
/// go through compact QR followed by a rank-reveal pass (SVD of the small R)
/// that drops directions below 1e-13 relative, so E never carries arbitrary
/// complement columns when M is rank-deficient; wide inputs use the thin SVD
/// directly.  M = 0 (or zero columns) yields k = 0.
inline SpanFactor span_factor(const DenseMatrix& M) {
  const Index rows = M.rows(), cols = M.cols();
  if (cols == 0) return {DenseMatrix::Zero(rows, 0), DenseMatrix::Zero(0, 0)};
  SvdResult sv;
  DenseMatrix Qfull;
  const bool tall = rows >= cols;
  if (tall) {
    QrResult qr = qr_compact(M);
    sv = svd_thin(qr.R);
    Qfull = std::move(qr.Q);
  } else {
    sv = svd_thin(M);
  }
  const double smax = sv.S(0);
  Index k = 0;
  while (k < sv.S.size() && sv.S(k) > 1e-13 * smax) ++k;
  SpanFactor out;
  out.E = tall ? DenseMatrix(Qfull * sv.U.leftCols(k)) : DenseMatrix(sv.U.leftCols(k));
  out.G = sv.S.head(k).asDiagonal() * sv.V.leftCols(k).transpose();
  return out;
}

namespace detail {

// Deterministic standard-normal sampler (Box-Muller over mt19937_64
// uniforms); pinned here so output bytes do not depend on the C++ runtime's
// normal_distribution implementation.
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : gen_(seed) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;          // [0, 1)
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 6.283185307179586476925286766559 * u2;
    spare_ = rad * std::sin(ang);
    have_spare_ = true;
    return rad * std::cos(ang);
  }

  DenseMatrix matrix(Index rows, Index cols) {
    DenseMatrix M(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) M(i, j) = (*this)();
    return M;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace detail

/// Seeded random matrix with orthonormal columns (QR of a Gaussian draw).
/// Same seed always yields bit-identical output.
inline DenseMatrix rand_orthonormal(Index n, Index k, std::uint64_t seed) {
  if (n < k || k < 1)
    throw dimension_error("rand_orthonormal: need n >= k >= 1, got n=" + std::to_string(n) +
                          " k=" + std::to_string(k));
  detail::NormalSampler sampler(seed);
  for (int attempt = 0; attempt < 16; ++attempt) {
    QrResult qr = qr_compact(sampler.matrix(n, k));
    if (qr.R.diagonal().minCoeff() > 1e-10) return qr.Q;
  }
  throw geomerge_error("rand_orthonormal: failed to draw a full-rank Gaussian matrix");
}

}  // namespace geomerge
