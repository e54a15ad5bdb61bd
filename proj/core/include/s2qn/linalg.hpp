#ifndef S2QN_LINALG_HPP
#define S2QN_LINALG_HPP

#include <Eigen/Dense>
#include <vector>

#include "s2qn/errors.hpp"

namespace s2qn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace linalg {

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

// max|M - M^T| <= tol * max|M|, the tolerance the symmetric flag promises.
bool is_symmetric(const Matrix& m, double rel_tol = 1e-12);

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Cholesky with diagonal (symmetric) pivoting: P M P^T = L L^T.
// A pivot at or below 1e-13 * trace(M)/dim raises NotPositiveDefinite, which
// is the signal the step loop's lambda-doubling reacts to.
class SymCholesky {
public:
  explicit SymCholesky(const Matrix& m);

  Vector solve(const Vector& b) const;
  Matrix solve(const Matrix& b) const;
  int dim() const { return static_cast<int>(l_.rows()); }

private:
  Matrix l_;                   // lower triangle of the pivoted factor
  std::vector<int> perm_;      // row i of PM is row perm_[i] of M
};

// One-shot convenience for M x = b, M symmetric positive definite.
Vector sym_solve(const Matrix& m, const Vector& b);

// Brute-force inverse by Gauss-Jordan elimination with full pivoting.
// Test oracle: shares no code with SymCholesky or Eigen's factorizations.
// Exactly singular input (a zero pivot under full pivoting) raises Singular.
// Dimension is capped at 256; the oracle is for desk-scale checks only.
Matrix dense_inverse_oracle(const Matrix& m);

// y = (A (x) G) x under column-major vec: reshape x to X with rows(X) = cols(G),
// compute G X A^T, flatten. Never materializes the Kronecker product.
Vector kron_apply(const Matrix& a, const Matrix& g, const Vector& x);

// A (x) G with square factors, applied lazily.
struct KroneckerOperator {
  Matrix a;  // slow-index factor
  Matrix g;  // fast-index factor

  KroneckerOperator(Matrix a_in, Matrix g_in);

  Eigen::Index dim() const { return a.rows() * g.rows(); }
  Vector apply(const Vector& x) const { return kron_apply(a, g, x); }
  // Explicit product, for oracles; guarded against accidental huge dims.
  Matrix materialize() const;
};

// Q Q^T kept as its factor. Q is n x r with r typically << n.
struct LowRankFactor {
  Matrix q;

  Eigen::Index dim() const { return q.rows(); }
  Eigen::Index rank() const { return q.cols(); }
  Vector apply(const Vector& x) const { return q * (q.transpose() * x); }
  Matrix materialize() const { return q * q.transpose(); }
};

// Square blocks along the diagonal; apply/solve act blockwise and must agree
// with the assembled dense matrix.
struct BlockDiagonal {
  std::vector<Matrix> blocks;

  Eigen::Index dim() const;
  Vector apply(const Vector& x) const;
  Vector solve(const Vector& b) const;
  Matrix materialize() const;
};

}  // namespace linalg
}  // namespace s2qn

#endif  // S2QN_LINALG_HPP
