#pragma once
// Stiefel manifold St(n, r) = { U in R^{n x r} : U^T U = I } under the
// canonical metric <z, h>_U = tr(z^T (I - U U^T / 2) h).
//
// The exponential uses the compact block form: with A = U^T h (skew) and the
// compact QR (I - U U^T) h = Q R,
//
//     Exp_U(h) = [U Q] expm([[A, -R^T], [R, 0]]) [I_r; 0].
//
// The logarithm is a damped fixed-point shooting iteration with a bisection
// continuation fallback for pairs beyond the small-distance safe zone.
// Nothing here ever forms an n x n matrix.

#include "geomerge/core.hpp"
#include "geomerge/linalg.hpp"

namespace geomerge {

inline constexpr double kStiefelLogTol = 1e-10;
inline constexpr int kStiefelLogMaxIter = 200;

/// Canonical-metric inner product of two tangents at U.
inline double stiefel_inner(const DenseMatrix& U, const DenseMatrix& Z, const DenseMatrix& H) {
  require_same_shape(U, Z, "stiefel_inner");
  require_same_shape(U, H, "stiefel_inner");
  const DenseMatrix UZ = U.transpose() * Z;
  const DenseMatrix UH = U.transpose() * H;
  return Z.cwiseProduct(H).sum() - 0.5 * UZ.cwiseProduct(UH).sum();
}

/// Orthogonal projection of an ambient matrix onto the tangent space at U
/// (the same map for the embedded and the canonical metric):
/// X - U sym(U^T X).
inline DenseMatrix stiefel_project(const DenseMatrix& U, const DenseMatrix& X) {
  require_same_shape(U, X, "stiefel_project");
  return X - U * sym_part(U.transpose() * X);
}

/// Canonical-metric exponential map.
inline DenseMatrix stiefel_exp(const DenseMatrix& U, const DenseMatrix& H) {
  require_same_shape(U, H, "stiefel_exp");
  require_finite(H, "stiefel_exp");
  const Index r = U.cols();
  DenseMatrix A = skew_part(U.transpose() * H);
  DenseMatrix K = H - U * (U.transpose() * H);  // normal component, n x r
  QrResult qr = qr_compact(K);

  DenseMatrix block = DenseMatrix::Zero(2 * r, 2 * r);
  block.topLeftCorner(r, r) = A;
  block.topRightCorner(r, r) = -qr.R.transpose();
  block.bottomLeftCorner(r, r) = qr.R;
  DenseMatrix E = expm(block);

  return U * E.topLeftCorner(r, r) + qr.Q * E.bottomLeftCorner(r, r);
}

namespace detail {

// Single damped shooting run: iterate eta <- eta + c * proj_U(U1 - Exp_U(eta))
// with halving on residual non-decrease.  Returns the final residual.
inline double stiefel_log_shoot(const DenseMatrix& U, const DenseMatrix& U1, DenseMatrix& eta,
                                double tol, int max_iter) {
  DenseMatrix E = stiefel_exp(U, eta);
  double res = (E - U1).norm();
  for (int it = 0; it < max_iter && res > tol; ++it) {
    const DenseMatrix G = stiefel_project(U, U1 - E);
    double c = 1.0;
    bool improved = false;
    for (int h = 0; h < 30; ++h) {
      DenseMatrix trial = eta + c * G;
      DenseMatrix Et = stiefel_exp(U, trial);
      const double rt = (Et - U1).norm();
      if (rt < res) {
        eta.swap(trial);
        E.swap(Et);
        res = rt;
        improved = true;
        break;
      }
      c *= 0.5;
    }
    if (!improved) break;  // stalled
  }
  return res;
}

// Polar retraction of an arbitrary full-rank tall matrix onto the manifold.
inline DenseMatrix stiefel_polar_retract(const DenseMatrix& C) {
  SvdResult svd = svd_thin(C);
  if (svd.S(0) <= 0.0 || svd.S(svd.S.size() - 1) <= 1e-12 * svd.S(0))
    throw log_failure_error("stiefel_log: degenerate midpoint during continuation");
  return svd.U * svd.V.transpose();
}

// Principal matrix logarithm of a special-orthogonal matrix via its unitary
// eigendecomposition.  Throws log_failure_error when -1 is an eigenvalue (the
// principal-branch boundary); the caller's continuation resolves that case by
// halving the arc.
inline DenseMatrix logm_special_orthogonal(const DenseMatrix& Q) {
  Eigen::ComplexEigenSolver<DenseMatrix> es(Q);
  if (es.info() != Eigen::Success)
    throw log_failure_error("stiefel_log: rotation eigendecomposition failed");
  const Eigen::VectorXcd& lam = es.eigenvalues();
  Eigen::VectorXcd d(lam.size());
  for (Index j = 0; j < lam.size(); ++j) {
    if (std::abs(lam(j) + std::complex<double>(1.0, 0.0)) < 1e-8)
      throw log_failure_error("stiefel_log: rotation at the principal-branch boundary");
    d(j) = std::complex<double>(0.0, std::arg(lam(j)));
  }
  const Eigen::MatrixXcd L = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().inverse();
  return skew_part(DenseMatrix(L.real()));
}

// Algebraic fixed-point iteration for the canonical-metric logarithm: embed
// the pair into a 2r x 2r special-orthogonal matrix whose first block column
// is [U^T U1; N], then rotate the orthogonal completion until the lower-right
// block of the matrix logarithm vanishes, at which point the upper-left and
// lower-left blocks are the tangent coordinates.  Returns false when the pair
// sits outside the iteration's convergence zone.
inline bool stiefel_log_algebraic(const DenseMatrix& U, const DenseMatrix& U1, double tol,
                                  int max_iter, DenseMatrix& eta) {
  const Index r = U.cols();
  const DenseMatrix M = U.transpose() * U1;
  const QrResult qr = qr_compact(DenseMatrix(U1 - U * M));
  DenseMatrix W(2 * r, r);
  W.topRows(r) = M;
  W.bottomRows(r) = qr.R;
  Eigen::HouseholderQR<DenseMatrix> hqr(W);
  DenseMatrix V = hqr.householderQ() * DenseMatrix::Identity(2 * r, 2 * r);
  V.leftCols(r) = W;
  // Rotate the completion block so the bottom-right block becomes symmetric
  // with the most-positive spectrum the determinant constraint allows.  A raw
  // completion can start the 2r x 2r rotation at angle pi, where the
  // principal log is undefined even though the sought log exists.
  {
    const SvdResult sv = svd_thin(DenseMatrix(V.bottomRightCorner(r, r)));
    Vector d = Vector::Ones(r);
    d(r - 1) = std::copysign(1.0, V.determinant() * sv.U.determinant() * sv.V.determinant());
    V.rightCols(r) = V.rightCols(r) * (sv.V * d.asDiagonal() * sv.U.transpose());
  }
  try {
    for (int it = 0; it < max_iter; ++it) {
      const DenseMatrix L = logm_special_orthogonal(V);
      if (L.bottomRightCorner(r, r).norm() <= 0.1 * tol) {
        eta = U * L.topLeftCorner(r, r) + qr.Q * L.bottomLeftCorner(r, r);
        return true;
      }
      V.rightCols(r) = V.rightCols(r) * expm(DenseMatrix(-L.bottomRightCorner(r, r)));
    }
  } catch (const log_failure_error&) {
    return false;
  }
  return false;
}

inline DenseMatrix stiefel_log_impl(const DenseMatrix& U, const DenseMatrix& U1, double tol,
                                    int max_iter, int depth) {
  // Primary path: the algebraic iteration, with a shooting pass afterwards to
  // polish the exponential residual down to the caller's tolerance.
  DenseMatrix eta;
  if (stiefel_log_algebraic(U, U1, tol, max_iter, eta)) {
    const double res = stiefel_log_shoot(U, U1, eta, tol, max_iter);
    if (res <= tol) return eta;
  }
  eta = stiefel_project(U, U1 - U);
  double res = stiefel_log_shoot(U, U1, eta, tol, max_iter);
  if (res <= tol) return eta;
  if (depth <= 0)
    throw log_failure_error("stiefel_log: shooting did not converge (residual " +
                            std::to_string(res) + ")");
  // Continuation: log to a midpoint representative first, then restart the
  // shot from the doubled midpoint velocity.
  const DenseMatrix mid = stiefel_polar_retract(0.5 * (U + U1));
  DenseMatrix eta2 = 2.0 * stiefel_log_impl(U, mid, tol, max_iter, depth - 1);
  res = stiefel_log_shoot(U, U1, eta2, tol, max_iter);
  if (res <= tol) return eta2;
  throw log_failure_error("stiefel_log: continuation did not converge (residual " +
                          std::to_string(res) + ")");
}

}  // namespace detail

/// Inverse of stiefel_exp: the tangent eta at U with Exp_U(eta) = U1.
/// Converges reliably inside the small-distance safe zone and for most
/// well-separated pairs via internal continuation; raises log_failure_error
/// otherwise.
inline DenseMatrix stiefel_log(const DenseMatrix& U, const DenseMatrix& U1,
                               double tol = kStiefelLogTol, int max_iter = kStiefelLogMaxIter) {
  require_same_shape(U, U1, "stiefel_log");
  return detail::stiefel_log_impl(U, U1, tol, max_iter, 5);
}

}  // namespace geomerge
