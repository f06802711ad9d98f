#pragma once
// Reference merge rules: weighted Euclidean averaging of dense deltas and
// diagonal Fisher merging as the closed-form minimizer of the quadratic
// surrogate sum_i (theta - theta_i)^T diag(F_i) (theta - theta_i).

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "geomerge/core.hpp"
#include "geomerge/frechet.hpp"  // detail::resolve_weights

namespace geomerge {

struct FisherBundle {
  std::vector<Vector> theta;   // one parameter vector per model
  std::vector<Vector> fisher;  // matching nonnegative per-coordinate Fishers
};

struct FisherMergeResult {
  Vector theta;
  std::vector<Index> fallback_coords;  // coordinates with zero total Fisher
};

namespace detail {

inline void validate_fisher_bundle(const FisherBundle& bundle, const char* who) {
  if (bundle.theta.empty()) throw invalid_input(std::string(who) + ": empty bundle");
  if (bundle.fisher.size() != bundle.theta.size())
    throw dimension_error(std::string(who) + ": " + std::to_string(bundle.theta.size()) +
                        " parameter vectors but " + std::to_string(bundle.fisher.size()) +
                        " Fisher vectors");
  const Index n = bundle.theta[0].size();
  for (std::size_t i = 0; i < bundle.theta.size(); ++i) {
    if (bundle.theta[i].size() != n || bundle.fisher[i].size() != n)
      throw dimension_error(std::string(who) + ": inconsistent vector lengths");
    if (!bundle.theta[i].allFinite() || !bundle.fisher[i].allFinite())
      throw invalid_input(std::string(who) + ": non-finite entries");
    if ((bundle.fisher[i].array() < 0.0).any())
      throw invalid_input(std::string(who) + ": Fisher entries must be nonnegative");
  }
}

}  // namespace detail

/// lambda * sum_i w_i Delta_i; empty weights mean uniform.
inline DenseMatrix euclid_average(const std::vector<DenseMatrix>& deltas,
                                  const std::vector<double>& weights = {}, double lambda = 1.0) {
  const std::vector<double> w =
      detail::resolve_weights(deltas.size(), weights, "euclid_average");
  for (std::size_t i = 1; i < deltas.size(); ++i)
    require_same_shape(deltas[0], deltas[i], "euclid_average");
  DenseMatrix acc = DenseMatrix::Zero(deltas[0].rows(), deltas[0].cols());
  for (std::size_t i = 0; i < deltas.size(); ++i) acc += w[i] * deltas[i];
  return lambda * acc;
}

/// Per-coordinate precision-weighted average (sum_i F_i theta_i) / (sum_i F_i).
/// Coordinates whose total Fisher is zero fall back to the unweighted mean
/// and are reported in fallback_coords.  Optional scalar weights multiply the
/// Fishers.
inline FisherMergeResult fisher_merge(const FisherBundle& bundle,
                                      const std::vector<double>& scalar_weights = {}) {
  detail::validate_fisher_bundle(bundle, "fisher_merge");
  const std::size_t T = bundle.theta.size();
  if (!scalar_weights.empty() && scalar_weights.size() != T)
    throw invalid_input("fisher_merge: scalar weight count mismatch");
  for (double w : scalar_weights)
    if (!std::isfinite(w) || w < 0.0)
      throw invalid_input("fisher_merge: scalar weights must be finite and nonnegative");

  const Index n = bundle.theta[0].size();
  FisherMergeResult out;
  out.theta = Vector::Zero(n);
  Vector num = Vector::Zero(n), den = Vector::Zero(n);
  for (std::size_t i = 0; i < T; ++i) {
    const double s = scalar_weights.empty() ? 1.0 : scalar_weights[i];
    num += s * (bundle.fisher[i].array() * bundle.theta[i].array()).matrix();
    den += s * bundle.fisher[i];
  }
  for (Index j = 0; j < n; ++j) {
    if (den(j) > 0.0) {
      out.theta(j) = num(j) / den(j);
    } else {
      double mean = 0.0;
      for (std::size_t i = 0; i < T; ++i) mean += bundle.theta[i](j);
      out.theta(j) = mean / static_cast<double>(T);
      out.fallback_coords.push_back(j);
    }
  }
  return out;
}

/// Quadratic surrogate sum_i (theta - theta_i)^T diag(F_i) (theta - theta_i).
inline double quad_surrogate_value(const Vector& theta, const FisherBundle& bundle) {
  detail::validate_fisher_bundle(bundle, "quad_surrogate_value");
  if (theta.size() != bundle.theta[0].size())
    throw invalid_input("quad_surrogate_value: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < bundle.theta.size(); ++i) {
    const Vector d = theta - bundle.theta[i];
    acc += (d.array().square() * bundle.fisher[i].array()).sum();
  }
  return acc;
}

}  // namespace geomerge
