#include "s2qn/schedule.hpp"

#include <cmath>
#include <limits>

#include "s2qn/errors.hpp"

namespace s2qn::schedule {

double AlphaRule::at(std::int64_t k) const {
  if (alpha0 <= 0.0) {
    throw ConfigError("alpha0 must be positive");
  }
  switch (kind) {
    case AlphaKind::constant:
      return alpha0;
    case AlphaKind::polynomial:
      return alpha0 / std::pow(1.0 + static_cast<double>(k), exponent);
  }
  throw ConfigError("unknown alpha rule");
}

std::int64_t batch_size(const BatchRule& rule, std::int64_t k, std::int64_t n_total) {
  if (rule.s0 < 1) {
    throw ConfigError("batch rule: s0 must be >= 1");
  }
  if (n_total < 1) {
    throw ConfigError("batch rule: dataset is empty");
  }
  double raw = 0.0;
  switch (rule.kind) {
    case BatchKind::constant:
      raw = static_cast<double>(rule.s0);
      break;
    case BatchKind::geometric: {
      if (rule.rho < 1.0) {
        throw ConfigError("batch rule: geometric ratio must be >= 1");
      }
      raw = static_cast<double>(rule.s0) * std::pow(rule.rho, static_cast<double>(k));
      break;
    }
    case BatchKind::superlinear: {
      if (rule.rho < 1.0) {
        throw ConfigError("batch rule: superlinear ratio must be >= 1");
      }
      const double expo = static_cast<double>(k) * std::log(static_cast<double>(k) + 2.0);
      raw = static_cast<double>(rule.s0) * std::pow(rule.rho, expo);
      break;
    }
  }
  if (!std::isfinite(raw) || raw >= static_cast<double>(n_total)) {
    return n_total;
  }
  const auto size = static_cast<std::int64_t>(std::ceil(raw));
  return size < 1 ? 1 : (size > n_total ? n_total : size);
}

void validate_thresholds(double r1, double r2) {
  if (!(r1 > 0.0) || !(r2 > r1)) {
    throw ConfigError("thresholds must satisfy 0 < r1 < r2");
  }
}

double lambda_k(std::optional<double> gnorm_prev, double alpha_k, double r1, double r2) {
  validate_thresholds(r1, r2);
  if (!(alpha_k > 0.0)) {
    throw ConfigError("lambda rule: alpha must be positive");
  }
  const double inv_alpha = 1.0 / alpha_k;
  if (!gnorm_prev.has_value()) {
    return inv_alpha;
  }
  const double g = *gnorm_prev;
  if (g < 0.0 || !std::isfinite(g)) {
    throw ConfigError("lambda rule: gradient norm must be finite and nonnegative");
  }
  if (g < r1) {
    return 2.0 * r1 / (g + r1) * inv_alpha;
  }
  if (g > r2) {
    return 2.0 * g / (g + r2) * inv_alpha;
  }
  return inv_alpha;
}

double theory_alpha_bound(double l_psi, double h, double r1, double r2) {
  validate_thresholds(r1, r2);
  if (!(l_psi >= 1.0)) {
    throw ConfigError("theory bound: smoothness estimate must be >= 1");
  }
  if (!(h > 0.0)) {
    throw ConfigError("theory bound: curvature norm estimate must be positive");
  }
  return r1 / (4.0 * r2 * (l_psi + h));
}

AlphaKind alpha_kind_from_string(const std::string& s) {
  if (s == "constant") return AlphaKind::constant;
  if (s == "polynomial") return AlphaKind::polynomial;
  throw ConfigError("unknown alpha rule: " + s);
}

BatchKind batch_kind_from_string(const std::string& s) {
  if (s == "constant") return BatchKind::constant;
  if (s == "geometric") return BatchKind::geometric;
  if (s == "superlinear") return BatchKind::superlinear;
  throw ConfigError("unknown batch rule: " + s);
}

}  // namespace s2qn::schedule
