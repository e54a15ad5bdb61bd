#include <cmath>
#include <numeric>

#include "s2qn/models.hpp"

namespace s2qn::models {

namespace {

// log(1 + exp(t)) without overflow for large |t|.
double softplus(double t) {
  if (t > 35.0) return t;
  if (t < -35.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

std::vector<Eigen::Index> all_indices(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return idx;
}

}  // namespace

Matrix Problem::sample_hessian(const Vector&, Eigen::Index) const {
  throw UnsupportedModel("per-sample Hessians are not available for this model");
}

double Problem::full_loss(const Vector& theta) const {
  const auto idx = all_indices(sample_count());
  return loss(theta, idx);
}

Vector Problem::full_gradient(const Vector& theta) const {
  const auto idx = all_indices(sample_count());
  return gradient(theta, idx);
}

Vector structured_pair_v(const Problem& problem, const Vector& theta_prev,
                         const Vector& theta_next, Batch batch) {
  if (batch.empty()) {
    throw DimensionMismatch("structured_pair_v: empty batch");
  }
  Vector v = Vector::Zero(problem.dim());
  for (const Eigen::Index i : batch) {
    const Vector w = problem.output_loss_gradient(theta_next, i);
    v += problem.jacobian_vjp(theta_next, i, w) -
         problem.jacobian_vjp(theta_prev, i, w);
  }
  v /= static_cast<double>(batch.size());
  return v;
}

LogisticRegressionProblem::LogisticRegressionProblem(dataio::Dataset data,
                                                     double mu)
    : data_(std::move(data)), mu_(mu) {
  if (mu_ < 0.0) {
    throw ConfigError("logistic regression: l2 coefficient must be >= 0");
  }
  for (Eigen::Index i = 0; i < data_.labels.size(); ++i) {
    const double y = data_.labels(i);
    if (y != 1.0 && y != -1.0) {
      throw ConfigError("logistic regression: labels must be -1 or +1");
    }
  }
}

double LogisticRegressionProblem::loss(const Vector& theta, Batch batch) const {
  if (batch.empty()) {
    throw DimensionMismatch("logistic loss: empty batch");
  }
  double acc = 0.0;
  for (const Eigen::Index i : batch) {
    acc += softplus(-data_.labels(i) * data_.row_dot(i, theta));
  }
  return acc / static_cast<double>(batch.size()) + mu_ * theta.squaredNorm();
}

Vector LogisticRegressionProblem::gradient(const Vector& theta,
                                           Batch batch) const {
  if (batch.empty()) {
    throw DimensionMismatch("logistic gradient: empty batch");
  }
  Vector g = Vector::Zero(dim());
  for (const Eigen::Index i : batch) {
    const double y = data_.labels(i);
    const double z = data_.row_dot(i, theta);
    data_.row_axpy(i, -y * sigmoid(-y * z), g);
  }
  g /= static_cast<double>(batch.size());
  g.noalias() += 2.0 * mu_ * theta;
  return g;
}

Vector LogisticRegressionProblem::sample_gradient(const Vector& theta,
                                                  Eigen::Index i) const {
  Vector g = 2.0 * mu_ * theta;
  const double y = data_.labels(i);
  const double z = data_.row_dot(i, theta);
  data_.row_axpy(i, -y * sigmoid(-y * z), g);
  return g;
}

Matrix LogisticRegressionProblem::sample_hessian(const Vector& theta,
                                                 Eigen::Index i) const {
  const double y = data_.labels(i);
  const double z = data_.row_dot(i, theta);
  const double w = sigmoid(y * z) * sigmoid(-y * z);
  const Vector x = data_.row(i);
  Matrix h = w * (x * x.transpose());
  h.diagonal().array() += 2.0 * mu_;
  return h;
}

Matrix LogisticRegressionProblem::ggn_factor(const Vector& theta,
                                             Eigen::Index i) const {
  const double y = data_.labels(i);
  const double z = data_.row_dot(i, theta);
  const double w = sigmoid(y * z) * sigmoid(-y * z);
  Matrix f(dim(), 1);
  f.col(0) = std::sqrt(w) * data_.row(i);
  return f;
}

Vector LogisticRegressionProblem::jacobian_vjp(const Vector&, Eigen::Index i,
                                               const Vector& w) const {
  if (w.size() != 1) {
    throw DimensionMismatch("logistic vjp: cotangent must have length 1");
  }
  return w(0) * data_.row(i);
}

Vector LogisticRegressionProblem::output_loss_gradient(const Vector& theta,
                                                       Eigen::Index i) const {
  const double y = data_.labels(i);
  const double z = data_.row_dot(i, theta);
  Vector g(1);
  g(0) = -y * sigmoid(-y * z);
  return g;
}

Matrix LogisticRegressionProblem::exact_hessian(const Vector& theta,
                                                Batch batch) const {
  if (batch.empty()) {
    throw DimensionMismatch("logistic Hessian: empty batch");
  }
  Matrix h = Matrix::Zero(dim(), dim());
  for (const Eigen::Index i : batch) {
    const double y = data_.labels(i);
    const double z = data_.row_dot(i, theta);
    const double w = sigmoid(y * z) * sigmoid(-y * z);
    const Vector x = data_.row(i);
    h.noalias() += w * (x * x.transpose());
  }
  h /= static_cast<double>(batch.size());
  h.diagonal().array() += 2.0 * mu_;
  return h;
}

}  // namespace s2qn::models
