#include "s2qn/linalg.hpp"

#include <cmath>
#include <cstdlib>

namespace s2qn::linalg {

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0.0) return true;
  const double gap = (m - m.transpose()).cwiseAbs().maxCoeff();
  return gap <= rel_tol * scale;
}

SymCholesky::SymCholesky(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("sym_solve: matrix is not square");
  }
  const Eigen::Index n = m.rows();
  if (n == 0) {
    throw DimensionMismatch("sym_solve: empty matrix");
  }
  const double tol = 1e-13 * m.trace() / static_cast<double>(n);

  l_ = m;
  perm_.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm_[static_cast<std::size_t>(i)] = static_cast<int>(i);

  for (Eigen::Index j = 0; j < n; ++j) {
    // Largest remaining diagonal entry is the next pivot.
    Eigen::Index p = j;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      if (l_(i, i) > l_(p, p)) p = i;
    }
    if (!(l_(p, p) > tol)) {
      throw NotPositiveDefinite("sym_solve: pivot below tolerance at step " +
                                std::to_string(j));
    }
    if (p != j) {
      l_.row(j).swap(l_.row(p));
      l_.col(j).swap(l_.col(p));
      std::swap(perm_[static_cast<std::size_t>(j)], perm_[static_cast<std::size_t>(p)]);
    }
    const double d = std::sqrt(l_(j, j));
    l_(j, j) = d;
    if (j + 1 < n) {
      l_.col(j).segment(j + 1, n - j - 1) /= d;
      // Rank-one downdate of the whole trailing block. Both triangles are
      // kept so the full row/col swaps above stay exact symmetric
      // permutations; downdating only the lower part would let a later pivot
      // swap pull stale upper entries into the factor.
      for (Eigen::Index c = j + 1; c < n; ++c) {
        const double ljc = l_(c, j);
        if (ljc != 0.0) {
          l_.col(c).segment(j + 1, n - j - 1).noalias() -=
              ljc * l_.col(j).segment(j + 1, n - j - 1);
        }
      }
    }
  }
}

Vector SymCholesky::solve(const Vector& b) const {
  const Eigen::Index n = l_.rows();
  if (b.size() != n) {
    throw DimensionMismatch("sym_solve: rhs length mismatch");
  }
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = b(perm_[static_cast<std::size_t>(i)]);
  l_.triangularView<Eigen::Lower>().solveInPlace(y);
  l_.triangularView<Eigen::Lower>().transpose().solveInPlace(y);
  Vector x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(perm_[static_cast<std::size_t>(i)]) = y(i);
  return x;
}

Matrix SymCholesky::solve(const Matrix& b) const {
  Matrix x(b.rows(), b.cols());
  for (Eigen::Index c = 0; c < b.cols(); ++c) {
    x.col(c) = solve(Vector(b.col(c)));
  }
  return x;
}

Vector sym_solve(const Matrix& m, const Vector& b) {
  return SymCholesky(m).solve(b);
}

Matrix dense_inverse_oracle(const Matrix& m) {
  if (m.rows() != m.cols()) {
    throw DimensionMismatch("dense_inverse_oracle: matrix is not square");
  }
  const Eigen::Index n = m.rows();
  if (n > 256) {
    throw DimensionMismatch("dense_inverse_oracle: dimension capped at 256");
  }
  Matrix a = m;
  std::vector<Eigen::Index> row_of(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> col_of(static_cast<std::size_t>(n));
  std::vector<int> used(static_cast<std::size_t>(n), 0);

  for (Eigen::Index step = 0; step < n; ++step) {
    // Full pivot search over rows and columns not yet reduced.
    double big = 0.0;
    Eigen::Index prow = -1, pcol = -1;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (used[static_cast<std::size_t>(r)]) continue;
      for (Eigen::Index c = 0; c < n; ++c) {
        if (used[static_cast<std::size_t>(c)]) continue;
        const double v = std::abs(a(r, c));
        if (v >= big) {
          big = v;
          prow = r;
          pcol = c;
        }
      }
    }
    if (prow < 0 || big == 0.0) {
      throw Singular("dense_inverse_oracle: zero pivot at step " +
                     std::to_string(step));
    }
    used[static_cast<std::size_t>(pcol)] = 1;
    if (prow != pcol) {
      a.row(prow).swap(a.row(pcol));
    }
    row_of[static_cast<std::size_t>(step)] = prow;
    col_of[static_cast<std::size_t>(step)] = pcol;

    const double pivinv = 1.0 / a(pcol, pcol);
    a(pcol, pcol) = 1.0;
    a.row(pcol) *= pivinv;
    for (Eigen::Index r = 0; r < n; ++r) {
      if (r == pcol) continue;
      const double f = a(r, pcol);
      if (f == 0.0) continue;
      a(r, pcol) = 0.0;
      a.row(r) -= f * a.row(pcol);
    }
  }
  // Undo the implicit column permutation in reverse order.
  for (Eigen::Index step = n - 1; step >= 0; --step) {
    const Eigen::Index r = row_of[static_cast<std::size_t>(step)];
    const Eigen::Index c = col_of[static_cast<std::size_t>(step)];
    if (r != c) {
      a.col(r).swap(a.col(c));
    }
  }
  return a;
}

Vector kron_apply(const Matrix& a, const Matrix& g, const Vector& x) {
  if (x.size() != a.cols() * g.cols()) {
    throw DimensionMismatch("kron_apply: input length " + std::to_string(x.size()) +
                            " != cols(A)*cols(G) = " +
                            std::to_string(a.cols() * g.cols()));
  }
  const Eigen::Map<const Matrix> xm(x.data(), g.cols(), a.cols());
  Matrix y = g * xm * a.transpose();
  return Eigen::Map<Vector>(y.data(), y.size());
}

KroneckerOperator::KroneckerOperator(Matrix a_in, Matrix g_in)
    : a(std::move(a_in)), g(std::move(g_in)) {
  if (a.rows() != a.cols() || g.rows() != g.cols()) {
    throw DimensionMismatch("KroneckerOperator: factors must be square");
  }
}

Matrix KroneckerOperator::materialize() const {
  const Eigen::Index ma = a.rows();
  const Eigen::Index mg = g.rows();
  if (ma * mg > 4096) {
    throw DimensionMismatch("KroneckerOperator::materialize: product too large");
  }
  Matrix out(ma * mg, ma * mg);
  for (Eigen::Index i = 0; i < ma; ++i) {
    for (Eigen::Index j = 0; j < ma; ++j) {
      out.block(i * mg, j * mg, mg, mg) = a(i, j) * g;
    }
  }
  return out;
}

Eigen::Index BlockDiagonal::dim() const {
  Eigen::Index d = 0;
  for (const auto& b : blocks) d += b.rows();
  return d;
}

Vector BlockDiagonal::apply(const Vector& x) const {
  if (x.size() != dim()) {
    throw DimensionMismatch("BlockDiagonal::apply: length mismatch");
  }
  Vector y(x.size());
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    if (b.rows() != b.cols()) {
      throw DimensionMismatch("BlockDiagonal: non-square block");
    }
    y.segment(at, b.rows()).noalias() = b * x.segment(at, b.rows());
    at += b.rows();
  }
  return y;
}

Vector BlockDiagonal::solve(const Vector& rhs) const {
  if (rhs.size() != dim()) {
    throw DimensionMismatch("BlockDiagonal::solve: length mismatch");
  }
  Vector x(rhs.size());
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    Eigen::FullPivLU<Matrix> lu(b);
    if (!lu.isInvertible()) {
      throw Singular("BlockDiagonal::solve: singular block");
    }
    x.segment(at, b.rows()) = lu.solve(rhs.segment(at, b.rows()));
    at += b.rows();
  }
  return x;
}

Matrix BlockDiagonal::materialize() const {
  Matrix out = Matrix::Zero(dim(), dim());
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    out.block(at, at, b.rows(), b.cols()) = b;
    at += b.rows();
  }
  return out;
}

}  // namespace s2qn::linalg
