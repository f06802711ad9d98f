#pragma once
// Shared dense-matrix carrier, small matrix helpers, and the error taxonomy
// used across the library.  All numeric data is 64-bit real, row-major.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace geomerge {

using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/* ---------------------------------------------------------------------- */
/* error taxonomy                                                          */
/* ---------------------------------------------------------------------- */

// Base class for every error raised by this library.
class geomerge_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
class dimension_error : public geomerge_error {
 public:
  using geomerge_error::geomerge_error;
};

// Operand violates a value-level precondition (non-finite entries,
// asymmetric input where symmetry is required, bad weights, ...).
class invalid_input : public geomerge_error {
 public:
  using geomerge_error::geomerge_error;
};

// Matrix expected to be symmetric positive definite is not (smallest
// eigenvalue at or below the domain floor).
class spd_domain_error : public geomerge_error {
 public:
  using geomerge_error::geomerge_error;
};

// Polar factor extraction hit a (numerically) singular input.
class degenerate_alignment_error : public geomerge_error {
 public:
  using geomerge_error::geomerge_error;
};

// Riemannian logarithm did not converge.
class log_failure_error : public geomerge_error {
 public:
  using geomerge_error::geomerge_error;
};

// Cayley pseudo-lift is undefined for the given pair.
class lift_failure_error : public geomerge_error {
 public:
  using geomerge_error::geomerge_error;
};

// Cayley retraction hit a singular resolvent.
class retract_failure_error : public geomerge_error {
 public:
  using geomerge_error::geomerge_error;
};

// Low-rank factorization fell below the requested rank.
class rank_deficiency_error : public geomerge_error {
 public:
  rank_deficiency_error(const std::string& what, Index effective_rank)
      : geomerge_error(what), effective_rank(effective_rank) {}
  Index effective_rank;
};

// Rank lift cannot be carried out (no peers, infeasible target rank, ...).
class lift_degeneracy_error : public geomerge_error {
 public:
  using geomerge_error::geomerge_error;
};

// Scalar toy-model operation left its domain (square-root domain,
// vanishing predictor target, ...).
class toy_domain_error : public geomerge_error {
 public:
  using geomerge_error::geomerge_error;
};

/* ---------------------------------------------------------------------- */
/* small helpers                                                           */
/* ---------------------------------------------------------------------- */

inline bool is_finite(const DenseMatrix& M) { return M.allFinite(); }

inline void require_finite(const DenseMatrix& M, const char* who) {
  if (!M.allFinite()) throw invalid_input(std::string(who) + ": non-finite entries");
}

inline void require_square(const DenseMatrix& M, const char* who) {
  if (M.rows() != M.cols())
    throw dimension_error(std::string(who) + ": expected a square matrix, got " +
                          std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
}

inline void require_same_shape(const DenseMatrix& A, const DenseMatrix& B, const char* who) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw dimension_error(std::string(who) + ": shape mismatch " + std::to_string(A.rows()) +
                          "x" + std::to_string(A.cols()) + " vs " + std::to_string(B.rows()) +
                          "x" + std::to_string(B.cols()));
}

// Symmetric part (A + A^T)/2.
inline DenseMatrix sym_part(const DenseMatrix& A) {
  return 0.5 * (A + A.transpose());
}

// Skew-symmetric part (A - A^T)/2.
inline DenseMatrix skew_part(const DenseMatrix& A) {
  return 0.5 * (A - A.transpose());
}

inline double frob(const DenseMatrix& A) { return A.norm(); }

// Deviation from orthonormal columns, ||Q^T Q - I||_F.
inline double orthonormality_defect(const DenseMatrix& Q) {
  return (Q.transpose() * Q - DenseMatrix::Identity(Q.cols(), Q.cols())).norm();
}

}  // namespace geomerge
