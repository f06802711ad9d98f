#pragma once
// Cayley fast path on the Stiefel manifold: ambient skew generators stored in
// factored form Omega = L S L^T (never densified), the pseudo-lift solving
// Cay(Omega) X = Q, and the Cayley retraction evaluated with small solves
// only.  The curve t -> Cay(t Omega) X has initial velocity 2 Omega X.

#include "geomerge/core.hpp"
#include "geomerge/linalg.hpp"

namespace geomerge {

// Lift is refused when the small skew core has a singular value at or below
// this absolute floor (orthonormal inputs keep the core entries O(1)).
inline constexpr double kCayleyLiftFloor = 1e-10;

/// Ambient skew-symmetric matrix Omega = L S L^T in factored form; an empty
/// factor pair (m = 0) represents the zero operator.
struct FactoredSkew {
  Index n = 0;
  DenseMatrix L;  // n x m
  DenseMatrix S;  // m x m, skew

  Index m() const { return L.cols(); }
  bool zero() const { return L.cols() == 0; }

  /// Omega * X without forming the n x n operator.
  DenseMatrix apply(const DenseMatrix& X) const {
    if (X.rows() != n)
      throw dimension_error("FactoredSkew::apply: operand has " + std::to_string(X.rows()) +
                            " rows, operator acts on " + std::to_string(n));
    if (zero()) return DenseMatrix::Zero(X.rows(), X.cols());
    return L * (S * (L.transpose() * X));
  }

  /// Dense n x n form; intended for diagnostics and small-n tests.
  DenseMatrix dense() const {
    if (zero()) return DenseMatrix::Zero(n, n);
    return L * S * L.transpose();
  }
};

/// Zero generator at ambient dimension n.
inline FactoredSkew factored_skew_zero(Index n) {
  FactoredSkew W;
  W.n = n;
  W.L = DenseMatrix::Zero(n, 0);
  W.S = DenseMatrix::Zero(0, 0);
  return W;
}

/// Pseudo-lift: a factored skew Omega with Cay(Omega) X = Q exactly, where
/// Cay(W) = (I + W)(I - W)^{-1}.  When the skew core
/// T = ((X^T Q)^T - X^T Q)/2 is invertible (possible only for even r) the
/// compact form Omega = (Q - X) (T^{-1}/2) (Q - X)^T is used.  Otherwise --
/// always for odd r, since odd skew matrices are singular -- the
/// complementary exact lift
///   Omega = D G P^T - P G D^T + 2 P G T G P^T,
/// with D = Q - X, P = X + Q, G = (P^T P)^{-1}, solves Omega P = D and hence
/// the same Cayley equation.  Both forms fail (lift_failure_error) when Q
/// equals X or when P^T P is singular (Q has a direction antipodal to X).
inline FactoredSkew cayley_lift(const DenseMatrix& X, const DenseMatrix& Q) {
  require_same_shape(X, Q, "cayley_lift");
  const Index n = X.rows(), r = X.cols();
  const DenseMatrix D = Q - X;
  FactoredSkew out;
  out.n = n;

  if (D.norm() <= 1e-12 * std::sqrt(static_cast<double>(r)))
    throw lift_failure_error("cayley_lift: Q equals X");

  const DenseMatrix M = X.transpose() * Q;
  const DenseMatrix T = 0.5 * (M.transpose() - M);
  SvdResult sv = svd_thin(T);
  if (sv.S(sv.S.size() - 1) > kCayleyLiftFloor) {
    DenseMatrix S = 0.5 * T.fullPivLu().inverse();
    out.L = D;
    out.S = skew_part(S);  // clean roundoff after inversion
    return out;
  }

  // Singular core: solve Omega (X + Q) = Q - X on span{D, P} instead.
  const DenseMatrix P = X + Q;
  const DenseMatrix G = P.transpose() * P;  // spectrum in [0, 4]
  SvdResult gv = svd_thin(G);
  if (gv.S(gv.S.size() - 1) <= kCayleyLiftFloor)
    throw lift_failure_error("cayley_lift: target has a direction antipodal to X");
  const DenseMatrix Gi = G.llt().solve(DenseMatrix::Identity(r, r));
  out.L.resize(n, 2 * r);
  out.L.leftCols(r) = D;
  out.L.rightCols(r) = P;
  out.S = DenseMatrix::Zero(2 * r, 2 * r);
  out.S.topRightCorner(r, r) = Gi;
  out.S.bottomLeftCorner(r, r) = -Gi;
  out.S.bottomRightCorner(r, r) = skew_part(2.0 * Gi * T * Gi);
  return out;
}

/// Cayley retraction Cay(scale * Omega) X evaluated via the low-rank
/// resolvent identity (I - W)^{-1} = I + L S (I - L^T L S)^{-1} L^T scaled
/// appropriately; only m x m systems are solved.
inline DenseMatrix cayley_retract(const DenseMatrix& X, const FactoredSkew& W,
                                  double scale = 1.0) {
  if (X.rows() != W.n)
    throw dimension_error("cayley_retract: X has " + std::to_string(X.rows()) +
                          " rows, generator acts on " + std::to_string(W.n));
  if (W.zero() || scale == 0.0) return X;
  const Index m = W.m();
  const DenseMatrix A =
      DenseMatrix::Identity(m, m) - scale * ((W.L.transpose() * W.L) * W.S);
  SvdResult sv = svd_thin(A);
  if (sv.S(sv.S.size() - 1) <= 1e-12 * sv.S(0))
    throw retract_failure_error("cayley_retract: singular resolvent");
  Eigen::FullPivLU<DenseMatrix> lu(A);
  const DenseMatrix Y = X + scale * (W.L * (W.S * lu.solve(W.L.transpose() * X)));
  return Y + scale * (W.L * (W.S * (W.L.transpose() * Y)));
}

/// Factored skew Omega whose Cayley curve through X has initial velocity
/// equal to the given tangent: 2 Omega X = zeta.  With v = zeta / 2,
/// A = skew(X^T v) and K = v - X A, the generator is
/// Omega = X A X^T + K X^T - X K^T, stored with L = [X K] (m = 2r).
inline FactoredSkew cayley_velocity_lift(const DenseMatrix& X, const DenseMatrix& zeta) {
  require_same_shape(X, zeta, "cayley_velocity_lift");
  const Index n = X.rows(), r = X.cols();
  const DenseMatrix v = 0.5 * zeta;
  const DenseMatrix A = skew_part(X.transpose() * v);
  const DenseMatrix K = v - X * A;
  FactoredSkew out;
  out.n = n;
  out.L.resize(n, 2 * r);
  out.L.leftCols(r) = X;
  out.L.rightCols(r) = K;
  out.S = DenseMatrix::Zero(2 * r, 2 * r);
  out.S.topLeftCorner(r, r) = A;
  out.S.topRightCorner(r, r) = -DenseMatrix::Identity(r, r);
  out.S.bottomLeftCorner(r, r) = DenseMatrix::Identity(r, r);
  return out;
}

/// Initial velocity of t -> Cay(t Omega) X.
inline DenseMatrix cayley_velocity(const FactoredSkew& W, const DenseMatrix& X) {
  return 2.0 * W.apply(X);
}

/// Exact inverse of the velocity-family retraction: the tangent zeta with
/// cayley_retract(X, cayley_velocity_lift(X, zeta), 1) = Q.  From the Cayley
/// identity (I - Omega) Q = (I + Omega) X with the velocity-family structure
/// Omega = X A X^T + K X^T - X K^T (A skew, X^T K = 0), splitting
/// Omega (X + Q) = Q - X along X and its complement gives, with M = X^T Q,
///   K = (Q - X M) (I + M)^{-1},
///   A = (M - I + K^T Q) (I + M)^{-1},
/// and zeta = 2 (X A + K).  Fails (lift_failure_error) when I + M is
/// singular, i.e. Q has a direction antipodal to X.
inline DenseMatrix cayley_inverse_retract(const DenseMatrix& X, const DenseMatrix& Q) {
  require_same_shape(X, Q, "cayley_inverse_retract");
  const Index r = X.cols();
  const DenseMatrix M = X.transpose() * Q;
  const DenseMatrix IpM = DenseMatrix::Identity(r, r) + M;
  SvdResult sv = svd_thin(IpM);
  if (sv.S(sv.S.size() - 1) <= kCayleyLiftFloor)
    throw lift_failure_error("cayley_inverse_retract: target has a direction antipodal to X");
  const DenseMatrix IpMi = IpM.fullPivLu().inverse();
  const DenseMatrix K = (Q - X * M) * IpMi;
  const DenseMatrix A =
      skew_part(DenseMatrix((M - DenseMatrix::Identity(r, r) + K.transpose() * Q) * IpMi));
  return 2.0 * (X * A + K);
}

}  // namespace geomerge
