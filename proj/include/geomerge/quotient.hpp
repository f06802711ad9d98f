#pragma once
// Polar-factored low-rank deltas W = U B V^T and their quotient geometry.
//
// A point is a triple (U, B, V) with U in St(d_out, r), B SPD r x r, V in
// St(d_in, r).  The orthogonal group O(r) acts by
// (U, B, V) . O = (U O, O^T B O, V O) without changing U B V^T; the merge
// geometry lives on the orbit space.  This header provides the total-space
// product metric (canonical x affine-invariant x canonical), gauge action,
// vertical/horizontal splitting, orbit alignment, and the induced quotient
// distance.

#include "geomerge/core.hpp"
#include "geomerge/linalg.hpp"
#include "geomerge/stiefel.hpp"
#include "geomerge/spd.hpp"
#include "geomerge/cayley.hpp"

#include <string>
#include <vector>

namespace geomerge {

// Singular values of the lowrank core below this fraction of the largest are
// raised to the floor (with a warning) when converting to polar form.
inline constexpr double kRankClampFloor = 1e-8;
// Orthogonality defect tolerated in a gauge rotation.
inline constexpr double kGaugeOrthTol = 1e-10;

/// Whether factor logarithms/exponentials use the exact Riemannian maps or
/// the Cayley fast path on the Stiefel factors.
enum class LogMode { exact, cayley };

/// Point of the total space: U in St(d_out, r), B SPD, V in St(d_in, r).
struct PolarPoint {
  DenseMatrix U, B, V;

  Index d_out() const { return U.rows(); }
  Index d_in() const { return V.rows(); }
  Index rank() const { return U.cols(); }
};

/// Tangent triple at a PolarPoint; `horizontal` records that the triple came
/// out of horizontal_project.
struct TangentTriple {
  DenseMatrix zU, zB, zV;
  bool horizontal = false;
};

/// Element of the gauge group O(r).
struct GaugeRotation {
  DenseMatrix O;
};

inline void validate_polar_point(const PolarPoint& P, double tol = 1e-8) {
  const Index r = P.rank();
  if (P.B.rows() != r || P.B.cols() != r || P.V.cols() != r)
    throw dimension_error("PolarPoint: inconsistent factor shapes");
  if (P.d_out() < r || P.d_in() < r)
    throw dimension_error("PolarPoint: rank exceeds an ambient dimension");
  require_finite(P.U, "PolarPoint.U");
  require_finite(P.B, "PolarPoint.B");
  require_finite(P.V, "PolarPoint.V");
  if (orthonormality_defect(P.U) > tol) throw invalid_input("PolarPoint: U is not orthonormal");
  if (orthonormality_defect(P.V) > tol) throw invalid_input("PolarPoint: V is not orthonormal");
  EigResult eg = eig_sym(P.B);
  const double lmax = eg.values(eg.values.size() - 1);
  if (lmax <= 0.0 || eg.values(0) <= kSpdDomainFloor * lmax)
    throw spd_domain_error("PolarPoint: B is not positive definite");
}

inline void require_same_manifold(const PolarPoint& P, const PolarPoint& Q, const char* who) {
  if (P.d_out() != Q.d_out() || P.d_in() != Q.d_in() || P.rank() != Q.rank())
    throw dimension_error(std::string(who) + ": points live on different manifolds");
}

/* ---------------------------------------------------------------------- */
/* conversions and gauge action                                            */
/* ---------------------------------------------------------------------- */

/// Polar factorization of a lowrank delta G H^T without densifying the
/// product: thin QRs of G and H followed by an SVD of the r x r core.
/// Core singular values below kRankClampFloor * sigma_max are raised to the
/// floor and reported through `warnings`.
inline PolarPoint from_lowrank(const DenseMatrix& G, const DenseMatrix& H,
                               std::vector<std::string>* warnings = nullptr) {
  if (G.cols() != H.cols())
    throw dimension_error("from_lowrank: G and H must share the rank dimension");
  const Index r = G.cols();
  if (r < 1) throw dimension_error("from_lowrank: rank must be at least 1");
  if (G.rows() < r || H.rows() < r)
    throw dimension_error("from_lowrank: factors are wider than tall");
  require_finite(G, "from_lowrank");
  require_finite(H, "from_lowrank");

  QrResult qg = qr_compact(G);
  QrResult qh = qr_compact(H);
  SvdResult core = svd_thin(qg.R * qh.R.transpose());
  const double smax = core.S(0);
  if (!(smax > 0.0)) throw rank_deficiency_error("from_lowrank: zero product G H^T", 0);

  const double floor = kRankClampFloor * smax;
  Index clamped = 0;
  Vector S = core.S;
  for (Index i = 0; i < r; ++i) {
    if (S(i) < floor) {
      S(i) = floor;
      ++clamped;
    }
  }
  if (clamped > 0 && warnings)
    warnings->push_back("from_lowrank: raised " + std::to_string(clamped) +
                        " core singular value(s) to the relative floor " +
                        std::to_string(kRankClampFloor));

  PolarPoint P;
  P.U = qg.Q * core.U;
  P.V = qh.Q * core.V;
  P.B = DenseMatrix(S.asDiagonal());
  return P;
}

/// Dense delta U B V^T.
inline DenseMatrix to_dense(const PolarPoint& P) { return P.U * P.B * P.V.transpose(); }

/// Gauge action (U O, O^T B O, V O); validates orthogonality of O.
inline PolarPoint gauge_apply(const PolarPoint& P, const DenseMatrix& O) {
  if (O.rows() != P.rank() || O.cols() != P.rank())
    throw dimension_error("gauge_apply: rotation size does not match the rank");
  if (orthonormality_defect(O) > kGaugeOrthTol)
    throw invalid_input("gauge_apply: O is not orthogonal");
  PolarPoint Q;
  Q.U = P.U * O;
  Q.B = sym_part(O.transpose() * P.B * O);
  Q.V = P.V * O;
  return Q;
}

/// Gauge action on a tangent triple (pushforward along gauge_apply).
inline TangentTriple gauge_apply_tangent(const TangentTriple& T, const DenseMatrix& O) {
  TangentTriple out;
  out.zU = T.zU * O;
  out.zB = sym_part(O.transpose() * T.zB * O);
  out.zV = T.zV * O;
  out.horizontal = T.horizontal;
  return out;
}

/* ---------------------------------------------------------------------- */
/* total-space metric, log, exp                                            */
/* ---------------------------------------------------------------------- */

/// Product metric: canonical on both Stiefel factors, affine-invariant on B.
inline double total_inner(const PolarPoint& P, const TangentTriple& a, const TangentTriple& b) {
  return stiefel_inner(P.U, a.zU, b.zU) + spd_inner(P.B, a.zB, b.zB) +
         stiefel_inner(P.V, a.zV, b.zV);
}

inline double total_norm(const PolarPoint& P, const TangentTriple& a) {
  return std::sqrt(std::max(0.0, total_inner(P, a, a)));
}

/// Per-factor logarithm.  In cayley mode the Stiefel entries are the Cayley
/// curve velocities 2 Omega U with Omega the pseudo-lift (exact-roundtrip at
/// the lift/retract level, second-order consistent with the geodesic log);
/// coincident Stiefel factors short-circuit to a zero entry.
inline TangentTriple total_log(const PolarPoint& P, const PolarPoint& Q,
                               LogMode mode = LogMode::exact) {
  require_same_manifold(P, Q, "total_log");
  TangentTriple out;
  if (mode == LogMode::exact) {
    out.zU = stiefel_log(P.U, Q.U);
    out.zV = stiefel_log(P.V, Q.V);
  } else {
    // The fast path must invert the same curve family total_exp retracts
    // along (the velocity-lift family), so that exp(log) is exact; the
    // endpoint-lift family traces a different curve through the same pair.
    out.zU = cayley_inverse_retract(P.U, Q.U);
    out.zV = cayley_inverse_retract(P.V, Q.V);
  }
  out.zB = spd_log(P.B, Q.B);
  return out;
}

/// Per-factor exponential with step size `step`.  In cayley mode the Stiefel
/// factors move along Cay(step * Omega) with Omega chosen so the initial
/// velocity matches the tangent entry.
inline PolarPoint total_exp(const PolarPoint& P, const TangentTriple& T, double step = 1.0,
                            LogMode mode = LogMode::exact) {
  PolarPoint out;
  if (mode == LogMode::exact) {
    out.U = stiefel_exp(P.U, step * T.zU);
    out.V = stiefel_exp(P.V, step * T.zV);
  } else {
    out.U = cayley_retract(P.U, cayley_velocity_lift(P.U, T.zU), step);
    out.V = cayley_retract(P.V, cayley_velocity_lift(P.V, T.zV), step);
  }
  out.B = spd_exp(P.B, step * T.zB);
  return out;
}

/* ---------------------------------------------------------------------- */
/* vertical / horizontal splitting                                         */
/* ---------------------------------------------------------------------- */

/// Vertical tangent generated by a skew Omega: the derivative of the gauge
/// orbit, (U Omega, B Omega - Omega B, V Omega).
inline TangentTriple vertical_vector(const PolarPoint& P, const DenseMatrix& Omega) {
  if (Omega.rows() != P.rank() || Omega.cols() != P.rank())
    throw dimension_error("vertical_vector: generator size does not match the rank");
  TangentTriple out;
  out.zU = P.U * Omega;
  out.zB = sym_part(P.B * Omega - Omega * P.B);
  out.zV = P.V * Omega;
  return out;
}

/// Skew generator Omega of the vertical component of a tangent triple: the
/// unique solution of
///   B^{-1} Omega B + B Omega B^{-1} - Omega = RHS,
///   RHS = skew( (V^T zV + U^T zU)/2 - (B^{-1} zB - zB B^{-1}) ),
/// solved entrywise in the eigenbasis of B, where the coefficient
/// lambda_j/lambda_i + lambda_i/lambda_j - 1 is always >= 1.
inline DenseMatrix gauge_drift(const PolarPoint& P, const TangentTriple& T) {
  const Index r = P.rank();
  Eigen::LLT<DenseMatrix> llt(sym_part(P.B));
  if (llt.info() != Eigen::Success) throw spd_domain_error("gauge_drift: B is not SPD");
  const DenseMatrix X = llt.solve(T.zB);  // B^{-1} zB; for symmetric zB, zB B^{-1} = X^T
  DenseMatrix rhs = 0.5 * (P.V.transpose() * T.zV + P.U.transpose() * T.zU) -
                    (X - X.transpose());
  rhs = skew_part(rhs);

  EigResult eg = eig_sym(P.B);
  const double lmax = eg.values(r - 1);
  if (lmax <= 0.0 || eg.values(0) <= kSpdDomainFloor * lmax)
    throw spd_domain_error("gauge_drift: B is not positive definite");
  const DenseMatrix Rp = eg.vectors.transpose() * rhs * eg.vectors;
  DenseMatrix Op(r, r);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < r; ++j) {
      const double ratio = eg.values(j) / eg.values(i);
      const double coef = ratio + 1.0 / ratio - 1.0;
      if (!(coef >= 1.0 - 1e-12))
        throw geomerge_error("gauge_drift: spectral coefficient fell below 1");
      Op(i, j) = Rp(i, j) / coef;
    }
  }
  return skew_part(eg.vectors * Op * eg.vectors.transpose());
}

/// Metric-orthogonal projection onto the horizontal space: subtracts the
/// vertical vector generated by gauge_drift.
inline TangentTriple horizontal_project(const PolarPoint& P, const TangentTriple& T) {
  const DenseMatrix Omega = gauge_drift(P, T);
  const TangentTriple vert = vertical_vector(P, Omega);
  TangentTriple out;
  out.zU = T.zU - vert.zU;
  out.zB = sym_part(T.zB - vert.zB);
  out.zV = T.zV - vert.zV;
  out.horizontal = true;
  return out;
}

/* ---------------------------------------------------------------------- */
/* orbit alignment and quotient distance                                   */
/* ---------------------------------------------------------------------- */

struct AlignResult {
  GaugeRotation O;          // the gauge applied to Q
  PolarPoint aligned;       // gauge_apply(Q, O)
  bool procrustes_fallback = false;
  // Byproducts of the final inner iteration, cached for callers that need
  // the log anyway (the Frechet solver); contractually identical to calling
  // total_log(P, aligned, mode) afterwards.
  TangentTriple log;
  double sq_dist = 0.0;
};

/// Orbit alignment of Q against P: Procrustes initialization
/// O = polar(U_Q^T U_P + V_Q^T V_P), then `inner_iters` refinement steps
/// O <- O expm(-tau Omega) with Omega = gauge_drift(P, log(P, Q.O)) and
/// halve-on-non-decrease backtracking on tau (at most 4 halvings per step).
/// The total-space squared distance to P never increases across steps.
inline AlignResult align(const PolarPoint& P, const PolarPoint& Q, int inner_iters = 5,
                         double tau = 1.0, LogMode mode = LogMode::exact,
                         const DenseMatrix* init_gauge = nullptr) {
  require_same_manifold(P, Q, "align");
  const Index r = P.rank();

  AlignResult res;
  res.O.O = DenseMatrix::Identity(r, r);
  const bool warm = init_gauge != nullptr && init_gauge->rows() == r && init_gauge->cols() == r;
  auto procrustes_init = [&] {
    res.O.O = DenseMatrix::Identity(r, r);
    try {
      res.O.O = polar_orthogonal(Q.U.transpose() * P.U + Q.V.transpose() * P.V);
    } catch (const degenerate_alignment_error&) {
      res.procrustes_fallback = true;
    }
  };
  if (warm)
    res.O.O = *init_gauge;
  else
    procrustes_init();
  res.aligned = gauge_apply(Q, res.O.O);
  try {
    res.log = total_log(P, res.aligned, mode);
  } catch (const geomerge_error&) {
    if (!warm) throw;  // a stale warm-start gauge gets one cold retry
    procrustes_init();
    res.aligned = gauge_apply(Q, res.O.O);
    res.log = total_log(P, res.aligned, mode);
  }
  res.sq_dist = total_inner(P, res.log, res.log);

  for (int a = 0; a < inner_iters; ++a) {
    const DenseMatrix Omega = gauge_drift(P, res.log);
    if (Omega.norm() <= 1e-14) break;
    double t = tau;
    bool accepted = false;
    for (int h = 0; h <= 4; ++h) {
      DenseMatrix Ot = res.O.O * expm(DenseMatrix(-t * Omega));
      PolarPoint Qt = gauge_apply(Q, Ot);
      TangentTriple lt;
      try {
        lt = total_log(P, Qt, mode);
      } catch (const geomerge_error&) {
        t *= 0.5;  // trial left the log's comfort zone; shrink
        continue;
      }
      const double st = total_inner(P, lt, lt);
      if (st <= res.sq_dist + 1e-12 * (1.0 + res.sq_dist)) {
        res.O.O = std::move(Ot);
        res.aligned = std::move(Qt);
        res.log = std::move(lt);
        res.sq_dist = st;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // stalled; keep the current gauge
  }
  return res;
}

/// Distance on the orbit space: total-space distance to the aligned
/// representative, with the alignment refined to convergence (the refinement
/// loop exits early once the gauge drift vanishes, so the generous sweep cap
/// is only paid on genuinely hard pairs).  The alignment objective is
/// nonconvex, so the search runs from both endpoints and keeps the shorter
/// candidate — the two directions pose the same orbit problem, which also
/// makes the result exactly symmetric.  Same-orbit pairs collapse to ~0.
inline double quotient_distance(const PolarPoint& P, const PolarPoint& Q) {
  require_same_manifold(P, Q, "quotient_distance");
  AlignResult forward = align(P, Q, 100, 1.0, LogMode::exact);
  AlignResult backward = align(Q, P, 100, 1.0, LogMode::exact);
  return std::sqrt(std::max(0.0, std::min(forward.sq_dist, backward.sq_dist)));
}

}  // namespace geomerge
