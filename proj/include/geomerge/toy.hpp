#pragma once
// Two-parameter toy model on (R*)^2 with the symmetry-invariant metric
// theta2^2 eta1 zeta1 + theta1^2 eta2 zeta2: closed-form geodesics, the
// invariant predictor theta1*theta2, the quotient Fréchet mean "average the
// predictors", the singular Fisher information matrix, and CSV curve
// emission for plotting.

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "geomerge/baselines.hpp"
#include "geomerge/core.hpp"

namespace geomerge {

using ToyPair = std::array<double, 2>;

struct ToyPoint {
  double theta1 = 1.0;
  double theta2 = 1.0;
};

struct ToyFisherInputs {
  double sxx = 1.0;     // sum of squared inputs, >= 0
  double sigma2 = 1.0;  // noise variance, > 0
};

struct ToyFrechetResult {
  double w_star = 0.0;      // merged predictor
  ToyPoint representative;  // gauge choice with predictor exactly w_star
};

struct ToyCurveRow {
  double t = 0.0;
  double theta1 = 0.0;
  double theta2 = 0.0;
  double predictor = 0.0;
  bool ok = true;  // false marks a geodesic-domain violation at this sample
};

namespace detail {

inline void validate_toy_point(const ToyPoint& p, const char* who) {
  if (!std::isfinite(p.theta1) || !std::isfinite(p.theta2) || p.theta1 == 0.0 || p.theta2 == 0.0)
    throw toy_domain_error(std::string(who) + ": point must have nonzero finite coordinates");
}

inline void validate_toy_fisher_inputs(const ToyFisherInputs& in, const char* who) {
  if (!std::isfinite(in.sxx) || in.sxx < 0.0 || !std::isfinite(in.sigma2) || in.sigma2 <= 0.0)
    throw toy_domain_error(std::string(who) + ": need sxx >= 0 and sigma2 > 0");
}

}  // namespace detail

/// Metric theta2^2 eta1 zeta1 + theta1^2 eta2 zeta2; invariant under the
/// scaling action (a theta1, theta2 / a) with covariant tangents.
inline double toy_inner(const ToyPoint& p, const ToyPair& eta, const ToyPair& zeta) {
  detail::validate_toy_point(p, "toy_inner");
  return p.theta2 * p.theta2 * eta[0] * zeta[0] + p.theta1 * p.theta1 * eta[1] * zeta[1];
}

/// Horizontality residual eta1/theta1 - eta2/theta2; zero iff eta is
/// metric-orthogonal to the orbit direction (theta1, -theta2).
inline double toy_is_horizontal(const ToyPoint& p, const ToyPair& eta) {
  detail::validate_toy_point(p, "toy_is_horizontal");
  return eta[0] / p.theta1 - eta[1] / p.theta2;
}

/// Invariant predictor theta1 * theta2.
inline double toy_predictor(const ToyPoint& p) { return p.theta1 * p.theta2; }

/// Closed-form geodesic theta_k(t) = theta_k sqrt(1 + 2 eta_k t / theta_k);
/// leaving the square-root domain raises toy_domain_error.
inline ToyPoint toy_geodesic(const ToyPoint& p, const ToyPair& eta, double t) {
  detail::validate_toy_point(p, "toy_geodesic");
  const double a1 = 1.0 + 2.0 * eta[0] / p.theta1 * t;
  const double a2 = 1.0 + 2.0 * eta[1] / p.theta2 * t;
  if (a1 <= 0.0 || a2 <= 0.0)
    throw toy_domain_error("toy_geodesic: out of domain at t = " + std::to_string(t));
  return {p.theta1 * std::sqrt(a1), p.theta2 * std::sqrt(a2)};
}

/// Quotient distance |predictor(p) - predictor(q)| (proportionality constant
/// fixed to 1); exactly gauge-invariant.
inline double toy_quotient_distance(const ToyPoint& p, const ToyPoint& q) {
  detail::validate_toy_point(p, "toy_quotient_distance");
  detail::validate_toy_point(q, "toy_quotient_distance");
  return std::abs(toy_predictor(p) - toy_predictor(q));
}

/// Quotient Fréchet mean: the weighted predictor average w*, plus the
/// balanced representative (sqrt|w*|, sign(w*) sqrt|w*|).  w* = 0 has no
/// on-manifold representative and raises toy_domain_error.
inline ToyFrechetResult toy_frechet(const std::vector<ToyPoint>& points,
                                    const std::vector<double>& weights = {}) {
  const std::vector<double> w = detail::resolve_weights(points.size(), weights, "toy_frechet");
  double ws = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    detail::validate_toy_point(points[i], "toy_frechet");
    ws += w[i] * toy_predictor(points[i]);
  }
  if (ws == 0.0)
    throw toy_domain_error("toy_frechet: merged predictor is 0, off the manifold");
  const double root = std::sqrt(std::abs(ws));
  return {ws, ToyPoint{root, ws > 0.0 ? root : -root}};
}

/// Fisher information (sxx/sigma2) [[t2^2, t1 t2], [t1 t2, t1^2]]; rank one,
/// so its determinant vanishes for every input.
inline DenseMatrix toy_fim(const ToyPoint& p, const ToyFisherInputs& in) {
  detail::validate_toy_point(p, "toy_fim");
  detail::validate_toy_fisher_inputs(in, "toy_fim");
  const double s = in.sxx / in.sigma2;
  DenseMatrix F(2, 2);
  F << s * p.theta2 * p.theta2, s * p.theta1 * p.theta2,
       s * p.theta1 * p.theta2, s * p.theta1 * p.theta1;
  return F;
}

/// The sign-flip pathology: Fisher-merging theta with -theta under their
/// (equal) diagonal Fishers collapses to (0, 0), while the quotient mean of
/// the same pair keeps the predictor.  Returns the Fisher-merged parameters.
inline ToyPair toy_fisher_pathology(const ToyPoint& p, const ToyFisherInputs& in) {
  const DenseMatrix F = toy_fim(p, in);
  FisherBundle bundle;
  bundle.theta = {Vector(2), Vector(2)};
  bundle.theta[0] << p.theta1, p.theta2;
  bundle.theta[1] << -p.theta1, -p.theta2;
  bundle.fisher = {Vector(2), Vector(2)};
  bundle.fisher[0] << F(0, 0), F(1, 1);
  bundle.fisher[1] = bundle.fisher[0];
  const FisherMergeResult merged = fisher_merge(bundle);
  return {merged.theta(0), merged.theta(1)};
}

/// Orbit samples (a theta1, theta2 / a) with a log-spaced over
/// [a_min, a_max]; the t column is the uniform sample parameter in [0, 1].
inline std::vector<ToyCurveRow> emit_orbit(const ToyPoint& p, Index steps, double a_min = 0.5,
                                           double a_max = 2.0) {
  detail::validate_toy_point(p, "emit_orbit");
  if (steps < 2) throw invalid_input("emit_orbit: need at least 2 samples");
  if (!(a_min > 0.0) || !(a_max > a_min))
    throw invalid_input("emit_orbit: need 0 < a_min < a_max");
  std::vector<ToyCurveRow> rows(static_cast<std::size_t>(steps));
  for (Index i = 0; i < steps; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(steps - 1);
    const double a = std::exp(std::log(a_min) + t * (std::log(a_max) - std::log(a_min)));
    ToyCurveRow& row = rows[static_cast<std::size_t>(i)];
    row.t = t;
    row.theta1 = a * p.theta1;
    row.theta2 = p.theta2 / a;
    row.predictor = row.theta1 * row.theta2;
  }
  return rows;
}

/// Geodesic samples over t in [t0, t1]; out-of-domain samples are flagged
/// per row (ok = false, NaN coordinates) rather than aborting the sweep.
inline std::vector<ToyCurveRow> emit_geodesic(const ToyPoint& p, const ToyPair& eta, Index steps,
                                              double t0 = 0.0, double t1 = 1.0) {
  detail::validate_toy_point(p, "emit_geodesic");
  if (steps < 2) throw invalid_input("emit_geodesic: need at least 2 samples");
  std::vector<ToyCurveRow> rows(static_cast<std::size_t>(steps));
  for (Index i = 0; i < steps; ++i) {
    const double t = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(steps - 1);
    ToyCurveRow& row = rows[static_cast<std::size_t>(i)];
    row.t = t;
    try {
      const ToyPoint q = toy_geodesic(p, eta, t);
      row.theta1 = q.theta1;
      row.theta2 = q.theta2;
      row.predictor = toy_predictor(q);
    } catch (const toy_domain_error&) {
      row.theta1 = row.theta2 = row.predictor = std::numeric_limits<double>::quiet_NaN();
      row.ok = false;
    }
  }
  return rows;
}

/// Merge-comparison table: one row per input (t = index), then the naive
/// coordinate average (t = T) and the quotient mean representative
/// (t = T + 1).
inline std::vector<ToyCurveRow> emit_merge_comparison(const std::vector<ToyPoint>& points,
                                                      const std::vector<double>& weights = {}) {
  const std::vector<double> w =
      detail::resolve_weights(points.size(), weights, "emit_merge_comparison");
  std::vector<ToyCurveRow> rows;
  rows.reserve(points.size() + 2);
  double avg1 = 0.0, avg2 = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    detail::validate_toy_point(points[i], "emit_merge_comparison");
    rows.push_back({static_cast<double>(i), points[i].theta1, points[i].theta2,
                    toy_predictor(points[i]), true});
    avg1 += w[i] * points[i].theta1;
    avg2 += w[i] * points[i].theta2;
  }
  rows.push_back({static_cast<double>(points.size()), avg1, avg2, avg1 * avg2, true});
  ToyCurveRow merged{static_cast<double>(points.size()) + 1.0, 0.0, 0.0, 0.0, true};
  try {
    const ToyFrechetResult fr = toy_frechet(points, w);
    merged.theta1 = fr.representative.theta1;
    merged.theta2 = fr.representative.theta2;
    merged.predictor = fr.w_star;
  } catch (const toy_domain_error&) {
    merged.theta1 = merged.theta2 = merged.predictor = std::numeric_limits<double>::quiet_NaN();
    merged.ok = false;
  }
  rows.push_back(merged);
  return rows;
}

/// CSV serialization: header t,theta1,theta2,predictor, 17 significant
/// digits, LF line endings.
inline std::string to_csv(const std::vector<ToyCurveRow>& rows) {
  std::string out = "t,theta1,theta2,predictor\n";
  char buf[128];
  for (const ToyCurveRow& row : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", row.t, row.theta1, row.theta2,
                  row.predictor);
    out += buf;
  }
  return out;
}

}  // namespace geomerge
