#pragma once
// Weighted Fréchet means.  The quotient solver alternates orbit alignment of
// every input against the current iterate with a backtracked step along the
// weighted horizontal log average; SPD and Stiefel single-factor means serve
// as independent oracles for the factor blocks.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "geomerge/quotient.hpp"
#include "geomerge/spd.hpp"
#include "geomerge/stiefel.hpp"

namespace geomerge {

// A trial step is accepted iff F' <= F + slack * (1 + F); the recorded
// functional trace is therefore non-increasing by construction.
inline constexpr double kFrechetDescentSlack = 1e-13;
inline constexpr int kFrechetMaxHalvings = 5;

struct FrechetConfig {
  std::vector<double> weights;  // empty -> uniform
  double alpha = 1.0;           // step size
  double tol = 1e-8;            // gradient-norm threshold
  Index max_iter = 100;
  Index align_iters_first = 5;  // alignment refinements, first outer iteration
  Index align_iters_rest = 2;   // and every later one
  double tau = 1.0;             // alignment step
  LogMode mode = LogMode::exact;

  enum class Init {
    highest_weight,  // input with the largest weight, ties to lowest index
    euclidean_svd,   // rank-r polar factorization of sum_i w_i Delta_i
  };
  Init init = Init::highest_weight;
};

struct FrechetReport {
  Index iterations = 0;  // equals the trace lengths
  std::vector<double> functional_trace;
  std::vector<double> gradient_trace;
  bool converged = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> resolve_weights(std::size_t count, const std::vector<double>& weights,
                                           const char* who) {
  if (count == 0) throw invalid_input(std::string(who) + ": empty input");
  if (weights.empty()) return std::vector<double>(count, 1.0 / static_cast<double>(count));
  if (weights.size() != count)
    throw invalid_input(std::string(who) + ": " + std::to_string(weights.size()) +
                        " weights for " + std::to_string(count) + " points");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0)
      throw invalid_input(std::string(who) + ": weights must be finite and nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw invalid_input(std::string(who) + ": weights sum to " + std::to_string(sum) +
                        ", expected 1");
  return weights;
}

inline std::size_t argmax_weight(const std::vector<double>& w) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < w.size(); ++i)
    if (w[i] > w[best]) best = i;
  return best;
}

// Rank-r polar factorization of sum_i w_i U_i B_i V_i^T without densifying:
// stack the weighted thin factors, span-factor each side, and truncate the
// small SVD core to the leading r directions (clamped like from_lowrank).
inline PolarPoint euclidean_svd_init(const std::vector<PolarPoint>& points,
                                     const std::vector<double>& w,
                                     std::vector<std::string>* warnings) {
  const Index r = points[0].rank();
  const Index d_out = points[0].d_out(), d_in = points[0].d_in();
  const Index k = static_cast<Index>(points.size()) * r;
  DenseMatrix G(d_out, k), H(d_in, k);
  for (std::size_t i = 0; i < points.size(); ++i) {
    G.middleCols(static_cast<Index>(i) * r, r) = w[i] * (points[i].U * points[i].B);
    H.middleCols(static_cast<Index>(i) * r, r) = points[i].V;
  }
  SpanFactor sg = span_factor(G), sh = span_factor(H);
  if (sg.E.cols() < r || sh.E.cols() < r)
    throw rank_deficiency_error("frechet: euclidean-svd initializer has rank " +
                                    std::to_string(std::min(sg.E.cols(), sh.E.cols())) +
                                    " < " + std::to_string(r),
                                std::min(sg.E.cols(), sh.E.cols()));
  SvdResult sv = svd_thin(sg.G * sh.G.transpose());
  Vector s = sv.S.head(r);
  const double floor = kRankClampFloor * sv.S(0);
  for (Index j = 0; j < r; ++j) {
    if (s(j) < floor) {
      s(j) = floor;
      if (warnings)
        warnings->push_back("frechet: euclidean-svd initializer clamped singular value " +
                            std::to_string(j));
    }
  }
  PolarPoint mu;
  mu.U = sg.E * sv.U.leftCols(r);
  mu.B = DenseMatrix(s.asDiagonal());
  mu.V = sh.E * sv.V.leftCols(r);
  return mu;
}

}  // namespace detail

/// Weighted Fréchet functional (1/2) sum_i w_i d(mu, x_i)^2 composed from
/// quotient_distance; empty weights mean uniform.
inline double frechet_functional(const PolarPoint& mu, const std::vector<PolarPoint>& points,
                                 const std::vector<double>& weights = {}) {
  const std::vector<double> w = detail::resolve_weights(points.size(), weights,
                                                        "frechet_functional");
  double acc = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double d = quotient_distance(mu, points[i]);
    acc += 0.5 * w[i] * d * d;
  }
  return acc;
}

/// Weighted quotient Fréchet mean by horizontal Riemannian gradient descent
/// with per-iteration orbit alignment and halve-on-increase backtracking.
/// The recorded functional trace is non-increasing; if no decreasing step
/// exists after kFrechetMaxHalvings halvings, the solver stops at the last
/// good iterate with a warning rather than moving uphill.
inline std::pair<PolarPoint, FrechetReport> frechet_mean_quotient(
    const std::vector<PolarPoint>& points, const FrechetConfig& config = {}) {
  const std::vector<double> w =
      detail::resolve_weights(points.size(), config.weights, "frechet_mean_quotient");
  if (!(config.alpha > 0.0) || !(config.tol > 0.0) || !(config.tau > 0.0))
    throw invalid_input("frechet_mean_quotient: alpha, tol, tau must be positive");
  for (std::size_t i = 1; i < points.size(); ++i)
    require_same_manifold(points[0], points[i], "frechet_mean_quotient");

  FrechetReport report;
  PolarPoint mu = config.init == FrechetConfig::Init::euclidean_svd
                      ? detail::euclidean_svd_init(points, w, &report.warnings)
                      : points[detail::argmax_weight(w)];

  const std::size_t T = points.size();
  std::vector<AlignResult> aligns(T);
  // Warm-start each point's gauge from the previous outer iteration: the
  // per-iteration sweep budget is small, but the gauges keep refining across
  // outer iterations, so the alignment error contracts alongside the mean.
  auto align_all = [&](const PolarPoint& base, int iters, std::vector<AlignResult>& out,
                       const std::vector<AlignResult>* warm) {
    for (std::size_t i = 0; i < T; ++i)
      out[i] = align(base, points[i], iters, config.tau, config.mode,
                     warm ? &(*warm)[i].O.O : nullptr);
  };
  auto functional_of = [&](const std::vector<AlignResult>& ar) {
    double acc = 0.0;
    for (std::size_t i = 0; i < T; ++i) acc += 0.5 * w[i] * ar[i].sq_dist;
    return acc;
  };

  align_all(mu, static_cast<int>(config.align_iters_first), aligns, nullptr);
  double F = functional_of(aligns);

  for (Index iter = 0; iter < config.max_iter; ++iter) {
    report.functional_trace.push_back(F);

    TangentTriple grad;
    grad.zU = DenseMatrix::Zero(mu.d_out(), mu.rank());
    grad.zB = DenseMatrix::Zero(mu.rank(), mu.rank());
    grad.zV = DenseMatrix::Zero(mu.d_in(), mu.rank());
    for (std::size_t i = 0; i < T; ++i) {
      if (w[i] == 0.0) continue;
      const TangentTriple h = horizontal_project(mu, aligns[i].log);
      grad.zU += w[i] * h.zU;
      grad.zB += w[i] * h.zB;
      grad.zV += w[i] * h.zV;
    }
    grad.horizontal = true;
    const double gnorm = total_norm(mu, grad);
    report.gradient_trace.push_back(gnorm);

    if (gnorm < config.tol) {
      report.converged = true;
      break;
    }

    double step = config.alpha;
    std::vector<AlignResult> trial_aligns(T);
    bool accepted = false;
    for (int h = 0; h <= kFrechetMaxHalvings; ++h) {
      PolarPoint trial = total_exp(mu, grad, step, config.mode);
      align_all(trial, static_cast<int>(config.align_iters_rest), trial_aligns, &aligns);
      const double Ft = functional_of(trial_aligns);
      if (Ft <= F + kFrechetDescentSlack * (1.0 + F)) {
        mu = std::move(trial);
        aligns.swap(trial_aligns);
        F = Ft;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      report.warnings.push_back("frechet: no decreasing step after " +
                                std::to_string(kFrechetMaxHalvings) +
                                " halvings; stopping at the last iterate");
      break;
    }
  }

  report.iterations = static_cast<Index>(report.functional_trace.size());
  if (!report.converged && report.warnings.empty())
    report.warnings.push_back("frechet: gradient norm above tolerance after " +
                              std::to_string(report.iterations) + " iterations");
  return {std::move(mu), std::move(report)};
}

/// Fréchet mean on SPD(r) under the affine-invariant metric (fixed-point
/// iteration on the weighted log average); gradient norm below 1e-10.
inline DenseMatrix frechet_mean_spd(const std::vector<DenseMatrix>& points,
                                    const std::vector<double>& weights = {}) {
  const std::vector<double> w = detail::resolve_weights(points.size(), weights,
                                                        "frechet_mean_spd");
  DenseMatrix mu = points[detail::argmax_weight(w)];
  for (int iter = 0; iter < 200; ++iter) {
    DenseMatrix g = DenseMatrix::Zero(mu.rows(), mu.cols());
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (w[i] == 0.0) continue;
      g += w[i] * spd_log(mu, points[i]);
    }
    if (std::sqrt(spd_inner(mu, g, g)) < 1e-10) return mu;
    mu = spd_exp(mu, g);
  }
  throw geomerge_error("frechet_mean_spd: no convergence after 200 iterations");
}

/// Fréchet mean on St(n,r) under the canonical metric; inputs must stay
/// within the log zone of the heaviest-weight initializer.
inline DenseMatrix frechet_mean_stiefel(const std::vector<DenseMatrix>& points,
                                        const std::vector<double>& weights = {}) {
  const std::vector<double> w = detail::resolve_weights(points.size(), weights,
                                                        "frechet_mean_stiefel");
  DenseMatrix mu = points[detail::argmax_weight(w)];
  for (int iter = 0; iter < 200; ++iter) {
    DenseMatrix g = DenseMatrix::Zero(mu.rows(), mu.cols());
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (w[i] == 0.0) continue;
      g += w[i] * stiefel_log(mu, points[i]);
    }
    if (std::sqrt(stiefel_inner(mu, g, g)) < 1e-8) return mu;
    mu = stiefel_exp(mu, g);
  }
  throw geomerge_error("frechet_mean_stiefel: no convergence after 200 iterations");
}

}  // namespace geomerge
