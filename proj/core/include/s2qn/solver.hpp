#ifndef S2QN_SOLVER_HPP
#define S2QN_SOLVER_HPP

#include "s2qn/linalg.hpp"
#include "s2qn/refinement.hpp"

namespace s2qn::solver {

using s2qn::Matrix;
using s2qn::Vector;

// Every routine here returns d = -(B + lambda I)^{-1} g for one structural
// form of B and throws NotPositiveDefinite when the factorization (or the
// descent test g^T d < 0) fails, which is the caller's signal to raise lambda
// and retry.

// B = H + gamma I - C P^{-1} C^T with dense H. Solved through the Woodbury
// identity on H~ = H + (gamma+lambda) I:
//   (H~ - C P^{-1} C^T)^{-1} = H~^{-1} + H~^{-1} C T^{-1} C^T H~^{-1},
//   T = P - C^T H~^{-1} C.
Vector direction_smw(const Matrix& h, const refinement::CompactLbfgs& lam,
                     double lambda, const Vector& g);

// B = Q Q^T + gamma I - C P^{-1} C^T. The low-rank factor joins the pair
// block: C~ = [C, Q], P~ = diag(P, -I), leaving a pure-diagonal H~ so the
// whole solve costs O(n (r+2p)^2).
Vector direction_lowrank(const linalg::LowRankFactor& q,
                         const refinement::CompactLbfgs& lam, double lambda,
                         const Vector& g);

enum class KronMode {
  exact,     // couple lambda through the eigenbasis of the activation factor
  pi_split,  // (A + sqrt(lambda) I) (x) (M + sqrt(lambda) I), the cheap split
};

// B = A (x) (G + Lam_block). Exact mode eigendecomposes A = E S E^T and
// solves (s_j (G+Lam) + lambda I) y_j = (R E)_j per eigenvalue, d = -vec(Y E^T).
Vector direction_kron(const Matrix& a_hat, const Matrix& g_tilde,
                      const Matrix& lam_block, double lambda, const Vector& g,
                      KronMode mode = KronMode::exact);

// B = A (x) G + (gamma I - C P^{-1} C^T) over the layer's parameters. The
// Woodbury outer step is the same as direction_smw; the inner H~ solves use
// the double eigenbasis A = E S E^T, G = F W F^T, where H~ is diagonal with
// entries w_i s_j + gamma + lambda.
Vector direction_kron_compact(const Matrix& a_hat, const Matrix& g_tilde,
                              const refinement::CompactLbfgs& lam,
                              double lambda, const Vector& g);

// Block-diagonal system: each entry solves its slice of g independently.
struct DenseBlock {
  const Matrix* h;
  const refinement::CompactLbfgs* lam;
};
Vector direction_block(const std::vector<DenseBlock>& blocks, double lambda,
                       const Vector& g);

}  // namespace s2qn::solver

#endif  // S2QN_SOLVER_HPP
