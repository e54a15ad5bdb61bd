#ifndef S2QN_REFINEMENT_HPP
#define S2QN_REFINEMENT_HPP

#include <Eigen/LU>
#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "s2qn/linalg.hpp"

namespace s2qn::refinement {

using s2qn::Matrix;
using s2qn::Vector;

// One secant observation. v is the refinement target the quasi-Newton matrix
// must map u to; v_hat is the raw same-sample gradient difference it was
// derived from (empty for structured pairs, whose v is definitional).
struct CurvaturePair {
  Vector u;
  Vector v_hat;
  Vector v;

  bool has_raw_difference() const { return v_hat.size() > 0; }
};

// FIFO window of the most recent accepted pairs, oldest first.
struct PairBuffer {
  int capacity = 5;
  double epsilon_b = 1e-8;
  bool powell_damping = true;
  std::deque<CurvaturePair> pairs;

  void push(CurvaturePair pair);
  int size() const { return static_cast<int>(pairs.size()); }
  bool empty() const { return pairs.empty(); }
};

enum class AcceptOutcome { accepted, damped, rejected };

// Curvature test u^T v >= eps_B |u||v| (with strict positivity so that the
// compact form's D stays positive). On failure with damping enabled, v is
// pulled toward apply_lambda(u) by the Powell rule
//   tau = 0.8 u^T Lam u / (u^T Lam u - u^T v),  v' = tau v + (1-tau) Lam u,
// which lands exactly at u^T v' = 0.2 u^T Lam u, then retested.
// apply_lambda is the action of the current refinement matrix.
// Throws ZeroStep when u = 0.
AcceptOutcome accept_pair(CurvaturePair& pair, const PairBuffer& buffer,
                          const std::function<Vector(const Vector&)>& apply_lambda);

// Limited-memory BFGS matrix in compact form:
//   Lam = gamma I - C P^{-1} C^T,  C = [gamma U, V],
//   P = [[gamma U^T U, L], [L^T, -D]],
// L(i,j) = u_i^T v_j strictly below the diagonal, D = diag(u_i^T v_i).
// Equals the pair-by-pair rank-2 recursion started from gamma I.
class CompactLbfgs {
public:
  // Empty refinement: Lam = gamma I.
  CompactLbfgs(double gamma, Eigen::Index dim);
  // Assembled form. P must be invertible; build_compact guards that.
  CompactLbfgs(double gamma, Eigen::Index dim, Matrix c, Matrix p);

  double gamma() const { return gamma_; }
  Eigen::Index dim() const { return dim_; }
  int pair_count() const { return static_cast<int>(c_.cols()) / 2; }
  const Matrix& c() const { return c_; }
  const Matrix& p() const { return p_; }
  // x -> P^{-1} x via the cached pivoted LU.
  Matrix solve_p(const Matrix& rhs) const;

  Vector apply(const Vector& x) const;
  Matrix materialize() const;

private:
  double gamma_;
  Eigen::Index dim_;
  Matrix c_;
  Matrix p_;
  Eigen::FullPivLU<Matrix> p_lu_;
};

// Scaling gamma = v^T v / u^T v of the newest pair, clipped to [1e-4, 1e4].
double gamma_from_pair(const CurvaturePair& pair);

// Assembles the compact form from the buffered window. If P is singular the
// oldest pair is dropped and assembly retried; with no pairs left the result
// is gamma I.
CompactLbfgs build_compact(const PairBuffer& buffer, double gamma, Eigen::Index dim);

// Middle-matrix choice for the block update.
enum class PChoice {
  symmetric,    // (V^T U + U^T V)/2, the default
  trace,        // Tr(V^T U) * I
  diagonal,     // diag(V^T U)
  exact_cross,  // V^T U as-is; reproduces the multi-secant identity Lam' U = V
};

struct BlockUpdateResult {
  Matrix lambda;
  double tau;      // damping factor actually used; 1 = undamped
  bool updated;    // false when damping degenerated to tau = 0 (no-op)
};

// Multi-secant block update
//   Lam' = Lam + V P^{-1} V^T - Lam U (U^T Lam U)^{-1} U^T Lam,
// with V pre-damped toward Lam U (tau halved from 1) until the chosen P is
// positive definite. Throws RankDeficientU when U^T Lam U is not invertible;
// callers prune dependent columns (see independent_columns) and retry.
BlockUpdateResult block_bfgs_update(const Matrix& lambda, const Matrix& u,
                                    const Matrix& v, PChoice choice);

struct SketchConfig {
  enum class Dist { gaussian, row_subsample };
  int dim = 0;  // 0 disables sketching
  Dist dist = Dist::gaussian;
};

// Compresses the pair columns with a seeded sketch, then applies the block
// update. Gaussian sketches mix columns with N(0, 1/s) weights; row-subsample
// sketches keep a sorted random subset of columns by copy, so the full-size
// subsample is bitwise identical to the unsketched update.
BlockUpdateResult sketchy_block_bfgs_update(const Matrix& lambda, const Matrix& u,
                                            const Matrix& v, const SketchConfig& sketch,
                                            PChoice choice, std::uint64_t seed);

// Greedy maximal subset of columns keeping U^T Lam U well conditioned,
// found by diagonally pivoted Cholesky on the Gram matrix.
std::vector<int> independent_columns(const Matrix& lambda, const Matrix& u,
                                     double rel_tol = 1e-12);

PChoice p_choice_from_string(const std::string& s);

}  // namespace s2qn::refinement

#endif  // S2QN_REFINEMENT_HPP
