#pragma once
// Quotient-compatible rank lift: complete each rank-r adapter to rank R with
// the leading singular directions of its peer residual, computed factored
// (never forming a d_out x d_in matrix), and fill the new SPD block with a
// conservative constant.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "geomerge/quotient.hpp"

namespace geomerge {

// A residual singular direction counts as positive when sigma exceeds this
// fraction of the largest singular value of the small core.
inline constexpr double kLiftPositiveCutoff = 1e-10;
// Below this fraction of the peer-scale bound the whole residual is treated
// as zero and the completion comes from seeded padding.
inline constexpr double kLiftNoiseFloor = 1e-12;

struct LiftConfig {
  Index target_rank = 0;     // R, must exceed the input rank r
  DenseMatrix coefficients;  // T x T peer weights, zero diagonal; empty -> all-ones off-diagonal
  std::uint64_t seed = 7;    // drives padding draws only
  bool allow_padding = true;
};

/// Residual of task t against its peers in factored form:
/// EU * K * EV^T = sum_{s != t} a_ts (I - U_t U_t^T) Delta_s (I - V_t V_t^T).
struct ResidualCore {
  DenseMatrix EU;  // d_out x kU, orthonormal
  DenseMatrix K;   // kU x kV
  DenseMatrix EV;  // d_in x kV, orthonormal
};

namespace detail {

inline DenseMatrix resolve_lift_coefficients(std::size_t T, const DenseMatrix& coeffs,
                                             const char* who) {
  const Index n = static_cast<Index>(T);
  if (coeffs.size() == 0)
    return DenseMatrix::Ones(n, n) - DenseMatrix::Identity(n, n);
  if (coeffs.rows() != n || coeffs.cols() != n)
    throw invalid_input(std::string(who) + ": coefficient matrix must be " + std::to_string(T) +
                        "x" + std::to_string(T));
  for (Index i = 0; i < n; ++i) {
    if (coeffs(i, i) != 0.0)
      throw invalid_input(std::string(who) + ": coefficient diagonal must be zero");
    for (Index j = 0; j < n; ++j)
      if (!std::isfinite(coeffs(i, j)) || coeffs(i, j) < 0.0)
        throw invalid_input(std::string(who) + ": coefficients must be finite and nonnegative");
  }
  return coeffs;
}

// Columns orthonormal among themselves and against `existing` (assumed
// orthonormal), drawn deterministically from the seed.
inline DenseMatrix pad_orthonormal(const DenseMatrix& existing, Index count, std::uint64_t seed) {
  const Index d = existing.rows();
  if (count == 0) return DenseMatrix::Zero(d, 0);
  if (existing.cols() + count > d)
    throw lift_degeneracy_error("lift: ambient dimension " + std::to_string(d) +
                                " cannot hold " + std::to_string(existing.cols() + count) +
                                " orthonormal columns");
  for (int attempt = 0; attempt < 16; ++attempt) {
    NormalSampler sampler(seed + static_cast<std::uint64_t>(attempt));
    DenseMatrix X(d, count);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < count; ++j) X(i, j) = sampler();
    if (existing.cols() > 0) X -= existing * (existing.transpose() * X);
    QrResult qr = qr_compact(X);
    double dmin = qr.R(0, 0);
    for (Index j = 1; j < count; ++j) dmin = std::min(dmin, qr.R(j, j));
    if (dmin > 1e-8) return qr.Q;
  }
  throw lift_degeneracy_error("lift: padding draw failed to produce independent columns");
}

}  // namespace detail

/// Conservative SPD filler: the geometric mean of the smallest eigenvalues
/// of the inputs' B factors.
inline double spd_filler(const std::vector<PolarPoint>& points) {
  if (points.empty()) throw invalid_input("spd_filler: empty input");
  double acc = 0.0;
  for (const PolarPoint& p : points) {
    EigResult eg = eig_sym(p.B);
    if (eg.values(0) <= 0.0)
      throw spd_domain_error("spd_filler: B factor is not positive definite");
    acc += std::log(eg.values(0));
  }
  return std::exp(acc / static_cast<double>(points.size()));
}

/// Factored peer residual for task t.  Projected peer factors
/// A_ts = U_s - U_t (U_t^T U_s) and C_ts = V_s - V_t (V_t^T V_s) are stacked,
/// span-factored, and contracted against M = blkdiag(a_ts B_s), so only thin
/// matrices are ever formed.
inline ResidualCore residual_core(std::size_t t, const std::vector<PolarPoint>& points,
                                  const DenseMatrix& coefficients = {}) {
  const std::size_t T = points.size();
  if (t >= T) throw invalid_input("residual_core: task index out of range");
  const DenseMatrix A = detail::resolve_lift_coefficients(T, coefficients, "residual_core");
  for (std::size_t s = 1; s < T; ++s)
    require_same_manifold(points[0], points[s], "residual_core");

  std::vector<std::size_t> peers;
  for (std::size_t s = 0; s < T; ++s)
    if (s != t && A(static_cast<Index>(t), static_cast<Index>(s)) != 0.0) peers.push_back(s);
  if (peers.empty()) throw lift_degeneracy_error("residual_core: empty peer set");

  const PolarPoint& pt = points[t];
  const Index r = pt.rank();
  const Index p = static_cast<Index>(peers.size());
  DenseMatrix Astack(pt.d_out(), p * r), Cstack(pt.d_in(), p * r);
  DenseMatrix M = DenseMatrix::Zero(p * r, p * r);
  for (Index j = 0; j < p; ++j) {
    const PolarPoint& ps = points[peers[static_cast<std::size_t>(j)]];
    Astack.middleCols(j * r, r) = ps.U - pt.U * (pt.U.transpose() * ps.U);
    Cstack.middleCols(j * r, r) = ps.V - pt.V * (pt.V.transpose() * ps.V);
    M.block(j * r, j * r, r, r) =
        A(static_cast<Index>(t), static_cast<Index>(peers[static_cast<std::size_t>(j)])) * ps.B;
  }
  SpanFactor sa = span_factor(Astack), sc = span_factor(Cstack);
  ResidualCore out;
  out.K = sa.G * M * sc.G.transpose();
  out.EU = std::move(sa.E);
  out.EV = std::move(sc.E);
  return out;
}

/// Lift every input to rank R: completion columns are the paired leading
/// singular directions of the task's residual core (never re-orthonormalized
/// independently, so the U/V pairing survives), padded from the seed when the
/// residual offers fewer than R - r positive directions; the new SPD block is
/// spd_filler(points) * I.
inline std::vector<PolarPoint> lift_adapters(const std::vector<PolarPoint>& points,
                                             const LiftConfig& config) {
  if (points.empty()) throw invalid_input("lift_adapters: empty input");
  for (std::size_t s = 1; s < points.size(); ++s)
    require_same_manifold(points[0], points[s], "lift_adapters");
  const Index r = points[0].rank();
  const Index R = config.target_rank;
  const Index dmin = std::min(points[0].d_out(), points[0].d_in());
  if (R <= r)
    throw lift_degeneracy_error("lift_adapters: target rank " + std::to_string(R) +
                                " does not exceed input rank " + std::to_string(r));
  if (R > dmin)
    throw lift_degeneracy_error("lift_adapters: target rank " + std::to_string(R) +
                                " exceeds min ambient dimension " + std::to_string(dmin));
  const std::size_t T = points.size();
  const DenseMatrix A =
      detail::resolve_lift_coefficients(T, config.coefficients, "lift_adapters");
  const double c = spd_filler(points);
  const Index need = R - r;

  std::vector<PolarPoint> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    const PolarPoint& pt = points[t];
    bool has_peers = false;
    double peer_scale = 0.0;
    for (std::size_t s = 0; s < T; ++s) {
      const double a = A(static_cast<Index>(t), static_cast<Index>(s));
      if (s != t && a != 0.0) {
        has_peers = true;
        peer_scale = std::max(peer_scale, a * points[s].B.norm());
      }
    }

    DenseMatrix Uperp(pt.d_out(), need), Vperp(pt.d_in(), need);
    Index q = 0;
    if (has_peers) {
      ResidualCore rc = residual_core(t, points, A);
      if (rc.K.size() > 0) {
        SvdResult sv = svd_thin(rc.K);
        if (sv.S(0) > kLiftNoiseFloor * peer_scale) {
          Index positive = 0;
          while (positive < sv.S.size() && sv.S(positive) > kLiftPositiveCutoff * sv.S(0))
            ++positive;
          q = std::min(positive, need);
          Uperp.leftCols(q) = rc.EU * sv.U.leftCols(q);
          Vperp.leftCols(q) = rc.EV * sv.V.leftCols(q);
        }
      }
    }
    if (q < need) {
      if (!config.allow_padding)
        throw lift_degeneracy_error("lift_adapters: task " + std::to_string(t) + " has " +
                                    std::to_string(q) + " residual directions for R - r = " +
                                    std::to_string(need) + " and padding is disabled");
      DenseMatrix baseU(pt.d_out(), r + q), baseV(pt.d_in(), r + q);
      baseU << pt.U, Uperp.leftCols(q);
      baseV << pt.V, Vperp.leftCols(q);
      const std::uint64_t sub = config.seed + 1000003ULL * static_cast<std::uint64_t>(t);
      Uperp.rightCols(need - q) = detail::pad_orthonormal(baseU, need - q, sub);
      Vperp.rightCols(need - q) = detail::pad_orthonormal(baseV, need - q, sub + 500009ULL);
    }

    PolarPoint lifted;
    lifted.U.resize(pt.d_out(), R);
    lifted.U << pt.U, Uperp;
    lifted.V.resize(pt.d_in(), R);
    lifted.V << pt.V, Vperp;
    lifted.B = DenseMatrix::Zero(R, R);
    lifted.B.topLeftCorner(r, r) = pt.B;
    lifted.B.bottomRightCorner(need, need) = c * DenseMatrix::Identity(need, need);
    validate_polar_point(lifted);
    out[t] = std::move(lifted);
  }
  return out;
}

}  // namespace geomerge
