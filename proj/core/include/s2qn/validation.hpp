#ifndef S2QN_VALIDATION_HPP
#define S2QN_VALIDATION_HPP

#include <string>
#include <utility>
#include <vector>

#include "s2qn/linalg.hpp"
#include "s2qn/models.hpp"

namespace s2qn::validation {

using s2qn::Matrix;
using s2qn::Vector;

// One self-check: the measured error against the tolerance it must stay
// under. Exception-style checks encode "as expected" as error 0 vs 1.
struct CheckResult {
  std::string suite;
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// ---- independent oracles -------------------------------------------------
// These deliberately avoid the code paths they are used to judge: the
// recursion instead of the compact form, nested loops instead of im2col,
// finite differences instead of backprop.

// gamma I updated pair-by-pair with the textbook rank-two recursion
//   Lam <- Lam - (Lam u)(Lam u)^T / (u^T Lam u) + v v^T / (v^T u).
Matrix recursive_bfgs_oracle(
    double gamma, const std::vector<std::pair<Vector, Vector>>& pairs);

// Central differences on the batch loss, coordinate step scaled by 1+|theta_i|.
Vector fd_gradient(const models::Problem& problem, const Vector& theta,
                   models::Batch batch, double step = 1e-5);

// Dense Kronecker product assembled entrywise; (A (x) G) acts on vec(X) with
// X laid out g-rows x a-rows, column-major.
Matrix dense_kron_oracle(const Matrix& a, const Matrix& g);

// Direct convolution, out(o, r*W+c) = sum_{j,dr,dc} k(o,j,dr,dc) img(j,r+dr,c+dc),
// zero padding, kernel taken from theta in the layer's column-major layout.
Matrix conv_forward_oracle(const Vector& theta, const Vector& image,
                           int in_channels, int out_channels, int radius,
                           int height, int width);

// ---- suites ----------------------------------------------------------------

std::vector<std::string> suite_names();
std::vector<CheckResult> run_suite(const std::string& name);
// Every suite whose name contains the filter substring; empty runs all.
std::vector<CheckResult> run_suites(const std::string& filter = "");

}  // namespace s2qn::validation

#endif  // S2QN_VALIDATION_HPP
