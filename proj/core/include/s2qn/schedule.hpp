#ifndef S2QN_SCHEDULE_HPP
#define S2QN_SCHEDULE_HPP

#include <cstdint>
#include <optional>
#include <string>

namespace s2qn::schedule {

// Step-size sequence. Polynomial decay is alpha0 / (1+k)^exponent.
enum class AlphaKind { constant, polynomial };

struct AlphaRule {
  AlphaKind kind = AlphaKind::constant;
  double alpha0 = 0.1;
  double exponent = 0.0;

  double at(std::int64_t k) const;
};

// Mini-batch growth. geometric: ceil(s0 * rho^k); superlinear:
// ceil(s0 * rho^(k*ln(k+2))). Both are capped at the dataset size.
enum class BatchKind { constant, geometric, superlinear };

struct BatchRule {
  BatchKind kind = BatchKind::constant;
  std::int64_t s0 = 32;
  double rho = 2.0;
};

std::int64_t batch_size(const BatchRule& rule, std::int64_t k, std::int64_t n_total);

// Gradient-norm-driven regularizer. Multiplies 1/alpha by a factor in (0,2]
// that is continuous across the thresholds:
//   |g| < r1 :  2 r1 / (|g| + r1)
//   |g| > r2 :  2 |g| / (|g| + r2)
//   else     :  1
// At k = 0 there is no previous gradient; the middle branch applies.
double lambda_k(std::optional<double> gnorm_prev, double alpha_k, double r1, double r2);

// alpha upper bound under which the almost-sure convergence guarantee holds:
// r1 / (4 r2 (L + h)), with L >= 1 the gradient Lipschitz estimate and h the
// curvature-matrix norm bound.
double theory_alpha_bound(double l_psi, double h, double r1, double r2);

void validate_thresholds(double r1, double r2);

AlphaKind alpha_kind_from_string(const std::string& s);
BatchKind batch_kind_from_string(const std::string& s);

}  // namespace s2qn::schedule

#endif  // S2QN_SCHEDULE_HPP
