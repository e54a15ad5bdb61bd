#include "s2qn/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "s2qn/rng.hpp"

namespace s2qn::refinement {

void PairBuffer::push(CurvaturePair pair) {
  if (capacity < 1) {
    throw ConfigError("pair buffer capacity must be >= 1");
  }
  while (static_cast<int>(pairs.size()) >= capacity) {
    pairs.pop_front();
  }
  pairs.push_back(std::move(pair));
}

namespace {

bool curvature_ok(const Vector& u, const Vector& v, double eps_b) {
  const double uv = u.dot(v);
  return uv > 0.0 && uv >= eps_b * u.norm() * v.norm();
}

}  // namespace

AcceptOutcome accept_pair(CurvaturePair& pair, const PairBuffer& buffer,
                          const std::function<Vector(const Vector&)>& apply_lambda) {
  if (pair.u.size() == 0 || pair.u.norm() == 0.0) {
    throw ZeroStep("accept_pair: zero parameter step");
  }
  if (curvature_ok(pair.u, pair.v, buffer.epsilon_b)) {
    return AcceptOutcome::accepted;
  }
  if (!buffer.powell_damping || !apply_lambda) {
    return AcceptOutcome::rejected;
  }
  const Vector lu = apply_lambda(pair.u);
  const double q = pair.u.dot(lu);
  const double c = pair.u.dot(pair.v);
  const double denom = q - c;
  if (!(q > 0.0) || !(denom > 0.0)) {
    return AcceptOutcome::rejected;
  }
  const double tau = 0.8 * q / denom;
  Vector damped = tau * pair.v + (1.0 - tau) * lu;
  if (!curvature_ok(pair.u, damped, buffer.epsilon_b)) {
    return AcceptOutcome::rejected;
  }
  pair.v = std::move(damped);
  return AcceptOutcome::damped;
}

CompactLbfgs::CompactLbfgs(double gamma, Eigen::Index dim)
    : gamma_(gamma), dim_(dim), c_(dim, 0), p_(0, 0) {}

CompactLbfgs::CompactLbfgs(double gamma, Eigen::Index dim, Matrix c, Matrix p)
    : gamma_(gamma), dim_(dim), c_(std::move(c)), p_(std::move(p)) {
  if (c_.rows() != dim_ || c_.cols() != p_.rows() || p_.rows() != p_.cols()) {
    throw DimensionMismatch("CompactLbfgs: inconsistent C/P shapes");
  }
  p_lu_.compute(p_);
  if (!p_lu_.isInvertible()) {
    throw SingularP("CompactLbfgs: P is singular");
  }
}

Matrix CompactLbfgs::solve_p(const Matrix& rhs) const {
  if (p_.rows() == 0) {
    throw SingularP("CompactLbfgs: no pairs, P is empty");
  }
  return p_lu_.solve(rhs);
}

Vector CompactLbfgs::apply(const Vector& x) const {
  if (x.size() != dim_) {
    throw DimensionMismatch("CompactLbfgs::apply: length mismatch");
  }
  Vector y = gamma_ * x;
  if (p_.rows() > 0) {
    y.noalias() -= c_ * p_lu_.solve(c_.transpose() * x);
  }
  return y;
}

Matrix CompactLbfgs::materialize() const {
  Matrix out = gamma_ * Matrix::Identity(dim_, dim_);
  if (p_.rows() > 0) {
    out.noalias() -= c_ * p_lu_.solve(Matrix(c_.transpose()));
  }
  return out;
}

double gamma_from_pair(const CurvaturePair& pair) {
  const double uv = pair.u.dot(pair.v);
  if (!(uv > 0.0)) {
    throw ConfigError("gamma_from_pair: pair violates curvature condition");
  }
  const double g = pair.v.squaredNorm() / uv;
  return std::clamp(g, 1e-4, 1e4);
}

CompactLbfgs build_compact(const PairBuffer& buffer, double gamma, Eigen::Index dim) {
  if (!(gamma > 0.0)) {
    throw ConfigError("build_compact: gamma must be positive");
  }
  std::deque<CurvaturePair> window = buffer.pairs;
  while (!window.empty()) {
    const auto q = static_cast<Eigen::Index>(window.size());
    Matrix u_mat(dim, q), v_mat(dim, q);
    for (Eigen::Index i = 0; i < q; ++i) {
      const auto& pr = window[static_cast<std::size_t>(i)];
      if (pr.u.size() != dim || pr.v.size() != dim) {
        throw DimensionMismatch("build_compact: pair dimension mismatch");
      }
      u_mat.col(i) = pr.u;
      v_mat.col(i) = pr.v;
    }
    Matrix c(dim, 2 * q);
    c.leftCols(q) = gamma * u_mat;
    c.rightCols(q) = v_mat;

    Matrix p = Matrix::Zero(2 * q, 2 * q);
    p.topLeftCorner(q, q) = gamma * (u_mat.transpose() * u_mat);
    for (Eigen::Index i = 0; i < q; ++i) {
      for (Eigen::Index j = 0; j < i; ++j) {
        p(i, q + j) = u_mat.col(i).dot(v_mat.col(j));
      }
      p(q + i, q + i) = -u_mat.col(i).dot(v_mat.col(i));
    }
    p.bottomLeftCorner(q, q) = p.topRightCorner(q, q).transpose();

    Eigen::FullPivLU<Matrix> probe(p);
    if (probe.isInvertible()) {
      return CompactLbfgs(gamma, dim, std::move(c), std::move(p));
    }
    window.pop_front();  // singular P: retry without the oldest pair
  }
  return CompactLbfgs(gamma, dim);
}

namespace {

// P candidate for the block update. SPD is judged on the symmetric part.
Matrix middle_matrix(const Matrix& u, const Matrix& v, PChoice choice) {
  const Matrix cross = v.transpose() * u;
  switch (choice) {
    case PChoice::symmetric:
      return 0.5 * (cross + cross.transpose());
    case PChoice::trace:
      return cross.trace() * Matrix::Identity(cross.rows(), cross.cols());
    case PChoice::diagonal:
      return Matrix(cross.diagonal().asDiagonal());
    case PChoice::exact_cross:
      return cross;
  }
  throw ConfigError("unknown middle-matrix choice");
}

bool spd_on_symmetric_part(const Matrix& m) {
  try {
    linalg::SymCholesky chol(linalg::symmetrize(m));
    return true;
  } catch (const NotPositiveDefinite&) {
    return false;
  }
}

}  // namespace

BlockUpdateResult block_bfgs_update(const Matrix& lambda, const Matrix& u,
                                    const Matrix& v, PChoice choice) {
  if (lambda.rows() != lambda.cols()) {
    throw DimensionMismatch("block update: Lambda must be square");
  }
  if (u.rows() != lambda.rows() || v.rows() != u.rows() || v.cols() != u.cols()) {
    throw DimensionMismatch("block update: pair shapes inconsistent");
  }
  if (u.cols() == 0) {
    return {lambda, 1.0, false};
  }

  const Matrix lu = lambda * u;
  const Matrix gram = linalg::symmetrize(u.transpose() * lu);
  std::unique_ptr<linalg::SymCholesky> gram_chol;
  try {
    gram_chol = std::make_unique<linalg::SymCholesky>(gram);
  } catch (const NotPositiveDefinite&) {
    throw RankDeficientU("block update: U^T Lambda U is rank deficient");
  }

  // Damp V toward Lambda U until the middle matrix is positive definite.
  double tau = 1.0;
  Matrix v_eff = v;
  bool found = false;
  for (int attempt = 0; attempt < 31; ++attempt) {
    v_eff = tau * v + (1.0 - tau) * lu;
    if (spd_on_symmetric_part(middle_matrix(u, v_eff, choice))) {
      found = true;
      break;
    }
    tau *= 0.5;
  }
  if (!found) {
    // tau -> 0 limit: the two correction terms cancel and the update is a no-op.
    return {lambda, 0.0, false};
  }

  const Matrix p = middle_matrix(u, v_eff, choice);
  Eigen::FullPivLU<Matrix> p_lu(p);
  if (!p_lu.isInvertible()) {
    return {lambda, 0.0, false};
  }

  Matrix next = lambda;
  next.noalias() += v_eff * p_lu.solve(Matrix(v_eff.transpose()));
  next.noalias() -= lu * gram_chol->solve(Matrix(lu.transpose()));
  return {std::move(next), tau, true};
}

BlockUpdateResult sketchy_block_bfgs_update(const Matrix& lambda, const Matrix& u,
                                            const Matrix& v, const SketchConfig& sketch,
                                            PChoice choice, std::uint64_t seed) {
  const auto q = static_cast<int>(u.cols());
  if (sketch.dim <= 0 || q == 0) {
    return block_bfgs_update(lambda, u, v, choice);
  }
  const int s = std::min(sketch.dim, q);
  rng::Stream stream(seed);

  if (sketch.dist == SketchConfig::Dist::row_subsample) {
    auto idx = stream.sample_without_replacement(q, s);
    std::sort(idx.begin(), idx.end());
    if (static_cast<int>(idx.size()) == q) {
      // Identity sketch: forward the originals so the result is bitwise equal.
      return block_bfgs_update(lambda, u, v, choice);
    }
    Matrix us(u.rows(), s), vs(v.rows(), s);
    for (int i = 0; i < s; ++i) {
      us.col(i) = u.col(idx[static_cast<std::size_t>(i)]);
      vs.col(i) = v.col(idx[static_cast<std::size_t>(i)]);
    }
    return block_bfgs_update(lambda, us, vs, choice);
  }

  // Gaussian mixing: Xi is s x q with N(0, 1/s) entries; pairs become U Xi^T.
  Matrix xi(s, q);
  const double scale = 1.0 / std::sqrt(static_cast<double>(s));
  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < q; ++c) {
      xi(r, c) = scale * stream.next_gaussian();
    }
  }
  return block_bfgs_update(lambda, u * xi.transpose(), v * xi.transpose(), choice);
}

std::vector<int> independent_columns(const Matrix& lambda, const Matrix& u,
                                     double rel_tol) {
  const auto q = static_cast<int>(u.cols());
  std::vector<int> kept;
  if (q == 0) return kept;
  Matrix gram = linalg::symmetrize(u.transpose() * (lambda * u));

  // Diagonally pivoted Cholesky; columns whose pivot survives are kept.
  std::vector<int> order(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) order[static_cast<std::size_t>(i)] = i;
  const double tol = rel_tol * std::max(gram.trace() / q, 0.0) + 1e-300;

  for (int j = 0; j < q; ++j) {
    int p = j;
    for (int i = j + 1; i < q; ++i) {
      if (gram(i, i) > gram(p, p)) p = i;
    }
    if (!(gram(p, p) > tol)) break;
    if (p != j) {
      gram.row(j).swap(gram.row(p));
      gram.col(j).swap(gram.col(p));
      std::swap(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(p)]);
    }
    const double d = std::sqrt(gram(j, j));
    gram(j, j) = d;
    for (int i = j + 1; i < q; ++i) gram(i, j) /= d;
    for (int c = j + 1; c < q; ++c) {
      for (int i = c; i < q; ++i) {
        gram(i, c) -= gram(i, j) * gram(c, j);
      }
    }
    kept.push_back(order[static_cast<std::size_t>(j)]);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

PChoice p_choice_from_string(const std::string& s) {
  if (s == "symmetric") return PChoice::symmetric;
  if (s == "trace") return PChoice::trace;
  if (s == "diagonal") return PChoice::diagonal;
  throw ConfigError("unknown p_choice: " + s);
}

}  // namespace s2qn::refinement
