#pragma once
// Shared fixture builders for the test suite.  Random draws here use
// std::normal_distribution (not the library's own sampler) so fixtures do not
// inherit the implementation's RNG choices.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "geomerge/geomerge.hpp"

namespace gmtest {

using geomerge::DenseMatrix;
using geomerge::Index;
using geomerge::PolarPoint;
using geomerge::TangentTriple;
using geomerge::Vector;

inline DenseMatrix gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix M(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) M(i, j) = normal(rng);
  return M;
}

/// Orthonormal n×k frame via Householder QR with a fixed sign convention.
inline DenseMatrix orthonormal(Index n, Index k, std::uint64_t seed) {
  const DenseMatrix M = gaussian(n, k, seed);
  Eigen::HouseholderQR<DenseMatrix> qr(M);
  DenseMatrix Q = qr.householderQ() * DenseMatrix::Identity(n, k);
  const DenseMatrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  for (Index j = 0; j < k; ++j)
    if (R(j, j) < 0) Q.col(j) = -Q.col(j);
  return Q;
}

inline DenseMatrix spd(Index r, std::uint64_t seed, double spread = 0.5) {
  const DenseMatrix S = spread * geomerge::sym_part(gaussian(r, r, seed));
  return geomerge::expm(S);
}

inline PolarPoint polar_point(Index d_out, Index d_in, Index r, std::uint64_t seed) {
  PolarPoint p;
  p.U = orthonormal(d_out, r, seed);
  p.V = orthonormal(d_in, r, seed + 1);
  p.B = spd(r, seed + 2);
  return p;
}

inline TangentTriple tangent(const PolarPoint& p, std::uint64_t seed, double scale = 1.0) {
  TangentTriple t;
  t.zU = scale * geomerge::stiefel_project(p.U, gaussian(p.d_out(), p.rank(), seed));
  t.zB = scale * geomerge::sym_part(gaussian(p.rank(), p.rank(), seed + 1));
  t.zV = scale * geomerge::stiefel_project(p.V, gaussian(p.d_in(), p.rank(), seed + 2));
  return t;
}

inline PolarPoint nearby(const PolarPoint& base, std::uint64_t seed, double scale) {
  return geomerge::total_exp(base, tangent(base, seed, scale));
}

inline double tangent_norm(const TangentTriple& t) {
  return std::sqrt(t.zU.squaredNorm() + t.zB.squaredNorm() + t.zV.squaredNorm());
}

inline DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const Index nr = static_cast<Index>(rows.size());
  const Index nc = static_cast<Index>(rows.begin()->size());
  DenseMatrix M(nr, nc);
  Index i = 0;
  for (const auto& row : rows) {
    Index j = 0;
    for (double v : row) M(i, j++) = v;
    ++i;
  }
  return M;
}

}  // namespace gmtest

#define EXPECT_MAT_NEAR(A, B, tol)                                          \
  do {                                                                      \
    const geomerge::DenseMatrix a_ = (A);                                   \
    const geomerge::DenseMatrix b_ = (B);                                   \
    ASSERT_EQ(a_.rows(), b_.rows());                                        \
    ASSERT_EQ(a_.cols(), b_.cols());                                        \
    EXPECT_LT((a_ - b_).norm(), (tol)) << "left:\n" << a_ << "\nright:\n" << b_; \
  } while (0)
