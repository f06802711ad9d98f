#pragma once
// Symmetric positive definite matrices under the affine-invariant metric
// <z, h>_B = tr(B^{-1} z B^{-1} h), with closed-form exponential, logarithm,
// and geodesic distance.

#include "geomerge/core.hpp"
#include "geomerge/linalg.hpp"

namespace geomerge {

namespace detail {

struct SpdSqrtPair {
  DenseMatrix sqrt;     // B^{1/2}
  DenseMatrix invsqrt;  // B^{-1/2}
};

// One eigendecomposition serving both square roots.
inline SpdSqrtPair spd_sqrt_pair(const DenseMatrix& B, const char* who) {
  EigResult eg = eig_sym(B);
  const double lmax = eg.values(eg.values.size() - 1);
  if (lmax <= 0.0 || eg.values(0) <= kSpdDomainFloor * lmax)
    throw spd_domain_error(std::string(who) + ": matrix is not positive definite");
  Vector rt = eg.values.cwiseSqrt();
  Vector irt = rt.cwiseInverse();
  SpdSqrtPair out;
  out.sqrt = sym_part(eg.vectors * rt.asDiagonal() * eg.vectors.transpose());
  out.invsqrt = sym_part(eg.vectors * irt.asDiagonal() * eg.vectors.transpose());
  return out;
}

}  // namespace detail

/// Affine-invariant inner product of two symmetric tangents at B.
inline double spd_inner(const DenseMatrix& B, const DenseMatrix& Z, const DenseMatrix& H) {
  require_same_shape(B, Z, "spd_inner");
  require_same_shape(B, H, "spd_inner");
  Eigen::LLT<DenseMatrix> llt(sym_part(B));
  if (llt.info() != Eigen::Success) throw spd_domain_error("spd_inner: base point is not SPD");
  const DenseMatrix X = llt.solve(Z);
  const DenseMatrix Y = llt.solve(H);
  return (X * Y).trace();
}

/// Exponential map: B^{1/2} expm(B^{-1/2} H B^{-1/2}) B^{1/2}.
inline DenseMatrix spd_exp(const DenseMatrix& B, const DenseMatrix& H) {
  require_same_shape(B, H, "spd_exp");
  detail::SpdSqrtPair p = detail::spd_sqrt_pair(B, "spd_exp");
  const DenseMatrix inner = sym_part(p.invsqrt * H * p.invsqrt);
  return sym_part(p.sqrt * expm(inner) * p.sqrt);
}

/// Logarithm map: B^{1/2} logm(B^{-1/2} C B^{-1/2}) B^{1/2}.
inline DenseMatrix spd_log(const DenseMatrix& B, const DenseMatrix& C) {
  require_same_shape(B, C, "spd_log");
  detail::SpdSqrtPair p = detail::spd_sqrt_pair(B, "spd_log");
  const DenseMatrix inner = sym_part(p.invsqrt * C * p.invsqrt);
  return sym_part(p.sqrt * logm_spd(inner) * p.sqrt);
}

/// Geodesic distance ||logm(B^{-1/2} C B^{-1/2})||_F.
inline double spd_distance(const DenseMatrix& B, const DenseMatrix& C) {
  require_same_shape(B, C, "spd_distance");
  detail::SpdSqrtPair p = detail::spd_sqrt_pair(B, "spd_distance");
  return logm_spd(sym_part(p.invsqrt * C * p.invsqrt)).norm();
}

}  // namespace geomerge
