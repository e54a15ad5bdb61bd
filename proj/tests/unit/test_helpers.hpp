#ifndef S2QN_TESTS_HELPERS_HPP
#define S2QN_TESTS_HELPERS_HPP

#include "s2qn/linalg.hpp"
#include "s2qn/rng.hpp"

namespace testutil {

using s2qn::Matrix;
using s2qn::Vector;

inline Vector randn(s2qn::rng::Stream& s, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = s.next_gaussian();
  return v;
}

inline Matrix randn_matrix(s2qn::rng::Stream& s, Eigen::Index r,
                           Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = s.next_gaussian();
  return m;
}

// SPD with eigenvalues bounded away from zero by `shift`.
inline Matrix make_spd(s2qn::rng::Stream& s, Eigen::Index n,
                       double shift = 0.5) {
  Matrix m = randn_matrix(s, n, n);
  return Matrix((m * m.transpose()) / static_cast<double>(n) +
                shift * Matrix::Identity(n, n));
}

inline double rel_err(const Vector& got, const Vector& want) {
  const double scale = std::max(1.0, want.lpNorm<Eigen::Infinity>());
  return (got - want).lpNorm<Eigen::Infinity>() / scale;
}

inline double rel_err(const Matrix& got, const Matrix& want) {
  const double scale = std::max(1.0, want.lpNorm<Eigen::Infinity>());
  return (got - want).lpNorm<Eigen::Infinity>() / scale;
}

}  // namespace testutil

#endif  // S2QN_TESTS_HELPERS_HPP
