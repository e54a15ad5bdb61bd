#include "s2qn/solver.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <cmath>

#include "s2qn/fault.hpp"

namespace s2qn::solver {

namespace {

// Rejecting non-descent output turns any slipped-through indefiniteness into
// the same lambda-raise signal as a failed factorization.
void check_descent(const Vector& g, const Vector& d) {
  if (g.isZero(0.0)) return;
  if (!(g.dot(d) < 0.0)) {
    throw NotPositiveDefinite("direction is not a descent direction");
  }
}

Vector finish(const Vector& g, Vector d) {
  check_descent(g, d);
  return d;
}

}  // namespace

Vector direction_smw(const Matrix& h, const refinement::CompactLbfgs& lam,
                     double lambda, const Vector& g) {
  const Eigen::Index n = g.size();
  if (h.rows() != n || h.cols() != n || lam.dim() != n) {
    throw DimensionMismatch("direction_smw: dimension mismatch");
  }
  if (lambda <= 0.0) {
    throw ConfigError("direction_smw: lambda must be positive");
  }
  Matrix h_shift = h;
  h_shift.diagonal().array() += lam.gamma() + lambda;
  const linalg::SymCholesky chol(h_shift);

  Vector y0 = chol.solve(g);
  Vector d;
  if (lam.pair_count() == 0) {
    d = -y0;
  } else {
    const Matrix& c = lam.c();
    const Matrix x = chol.solve(c);
    const Matrix t = lam.p() - c.transpose() * x;
    Eigen::FullPivLU<Matrix> t_lu(t);
    if (!t_lu.isInvertible()) {
      throw NotPositiveDefinite("direction_smw: capacitance matrix is singular");
    }
    const Vector w = t_lu.solve(c.transpose() * y0);
    d = -(y0 + x * w);
  }
  d = finish(g, std::move(d));
  if (fault::enabled("smw")) {
    d *= 1.0 + 1e-3;
  }
  return d;
}

Vector direction_lowrank(const linalg::LowRankFactor& q,
                         const refinement::CompactLbfgs& lam, double lambda,
                         const Vector& g) {
  const Eigen::Index n = g.size();
  if (lam.dim() != n || (q.q.size() != 0 && q.q.rows() != n)) {
    throw DimensionMismatch("direction_lowrank: dimension mismatch");
  }
  const double eta = lam.gamma() + lambda;
  if (eta <= 0.0) {
    throw NotPositiveDefinite("direction_lowrank: diagonal shift is not positive");
  }
  const Eigen::Index p2 = lam.c().cols();
  const Eigen::Index r = q.q.size() == 0 ? 0 : q.q.cols();
  if (p2 + r == 0) {
    return finish(g, Vector(-g / eta));
  }

  Matrix c_aug(n, p2 + r);
  if (p2 > 0) c_aug.leftCols(p2) = lam.c();
  if (r > 0) c_aug.rightCols(r) = q.q;
  Matrix p_aug = Matrix::Zero(p2 + r, p2 + r);
  if (p2 > 0) p_aug.topLeftCorner(p2, p2) = lam.p();
  if (r > 0) p_aug.bottomRightCorner(r, r) = -Matrix::Identity(r, r);

  const Matrix t_hat = p_aug - (c_aug.transpose() * c_aug) / eta;
  Eigen::FullPivLU<Matrix> t_lu(t_hat);
  if (!t_lu.isInvertible()) {
    throw NotPositiveDefinite("direction_lowrank: capacitance matrix is singular");
  }
  const Vector y0 = g / eta;
  const Vector w = t_lu.solve(c_aug.transpose() * y0);
  return finish(g, -(y0 + (c_aug * w) / eta));
}

namespace {

struct SymEigen {
  Matrix vectors;
  Vector values;
};

SymEigen sym_eigen(const Matrix& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.info() != Eigen::Success) {
    throw SolveFailed(std::string("eigendecomposition failed for ") + what);
  }
  return {es.eigenvectors(), es.eigenvalues()};
}

}  // namespace

Vector direction_kron(const Matrix& a_hat, const Matrix& g_tilde,
                      const Matrix& lam_block, double lambda, const Vector& g,
                      KronMode mode) {
  const Eigen::Index ma = a_hat.rows();
  const Eigen::Index mg = g_tilde.rows();
  if (a_hat.cols() != ma || g_tilde.cols() != mg || g.size() != ma * mg) {
    throw DimensionMismatch("direction_kron: dimension mismatch");
  }
  Matrix m = g_tilde;
  if (lam_block.size() != 0) {
    if (lam_block.rows() != mg || lam_block.cols() != mg) {
      throw DimensionMismatch("direction_kron: refinement block mismatch");
    }
    m += lam_block;
  }
  const Eigen::Map<const Matrix> r(g.data(), mg, ma);

  if (mode == KronMode::pi_split) {
    const double shift = std::sqrt(lambda);
    Matrix a_s = a_hat;
    a_s.diagonal().array() += shift;
    Matrix m_s = m;
    m_s.diagonal().array() += shift;
    const linalg::SymCholesky chol_a(a_s);
    const linalg::SymCholesky chol_m(m_s);
    const Matrix x = chol_m.solve(Matrix(r));
    const Matrix d_mat = chol_a.solve(Matrix(x.transpose())).transpose();
    Vector d = -Eigen::Map<const Vector>(d_mat.data(), d_mat.size());
    return finish(g, std::move(d));
  }

  const SymEigen ea = sym_eigen(a_hat, "activation factor");
  const Matrix re = r * ea.vectors;
  Matrix y(mg, ma);
  for (Eigen::Index j = 0; j < ma; ++j) {
    Matrix mj = ea.values(j) * m;
    mj.diagonal().array() += lambda;
    const linalg::SymCholesky chol(mj);  // NotPositiveDefinite raises lambda
    y.col(j) = chol.solve(Vector(re.col(j)));
  }
  const Matrix d_mat = y * ea.vectors.transpose();
  Vector d = -Eigen::Map<const Vector>(d_mat.data(), d_mat.size());
  return finish(g, std::move(d));
}

Vector direction_kron_compact(const Matrix& a_hat, const Matrix& g_tilde,
                              const refinement::CompactLbfgs& lam,
                              double lambda, const Vector& g) {
  const Eigen::Index ma = a_hat.rows();
  const Eigen::Index mg = g_tilde.rows();
  const Eigen::Index n = ma * mg;
  if (a_hat.cols() != ma || g_tilde.cols() != mg || g.size() != n ||
      lam.dim() != n) {
    throw DimensionMismatch("direction_kron_compact: dimension mismatch");
  }
  const double eta = lam.gamma() + lambda;
  const SymEigen ea = sym_eigen(a_hat, "activation factor");
  const SymEigen eg = sym_eigen(g_tilde, "pre-activation factor");

  Matrix denom(mg, ma);
  for (Eigen::Index j = 0; j < ma; ++j) {
    for (Eigen::Index i = 0; i < mg; ++i) {
      const double v = eg.values(i) * ea.values(j) + eta;
      if (!(v > 0.0)) {
        throw NotPositiveDefinite(
            "direction_kron_compact: base plus shift is not positive definite");
      }
      denom(i, j) = v;
    }
  }

  const auto h_solve = [&](const Vector& x) -> Vector {
    const Eigen::Map<const Matrix> xm(x.data(), mg, ma);
    Matrix w = eg.vectors.transpose() * xm * ea.vectors;
    w.array() /= denom.array();
    const Matrix out = eg.vectors * w * ea.vectors.transpose();
    return Eigen::Map<const Vector>(out.data(), out.size());
  };

  Vector y0 = h_solve(g);
  if (lam.pair_count() == 0) {
    return finish(g, -y0);
  }
  const Matrix& c = lam.c();
  Matrix x(n, c.cols());
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    x.col(j) = h_solve(c.col(j));
  }
  const Matrix t = lam.p() - c.transpose() * x;
  Eigen::FullPivLU<Matrix> t_lu(t);
  if (!t_lu.isInvertible()) {
    throw NotPositiveDefinite(
        "direction_kron_compact: capacitance matrix is singular");
  }
  const Vector w = t_lu.solve(c.transpose() * y0);
  return finish(g, -(y0 + x * w));
}

Vector direction_block(const std::vector<DenseBlock>& blocks, double lambda,
                       const Vector& g) {
  Eigen::Index total = 0;
  for (const auto& b : blocks) {
    if (!b.h || !b.lam) {
      throw DimensionMismatch("direction_block: null block");
    }
    total += b.h->rows();
  }
  if (total != g.size()) {
    throw DimensionMismatch("direction_block: blocks do not cover the vector");
  }
  Vector d(g.size());
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    const Eigen::Index len = b.h->rows();
    d.segment(at, len) =
        direction_smw(*b.h, *b.lam, lambda, Vector(g.segment(at, len)));
    at += len;
  }
  return d;
}

}  // namespace s2qn::solver
