#include <cmath>
#include <numbers>

#include "doctest.h"
#include "s2qn/curvature.hpp"
#include "s2qn/dataio.hpp"
#include "s2qn/models.hpp"
#include "s2qn/refinement.hpp"
#include "s2qn/validation.hpp"
#include "test_helpers.hpp"

using namespace s2qn;
using testutil::randn;
using testutil::randn_matrix;
using testutil::rel_err;

namespace {

models::LogisticRegressionProblem small_logistic(std::uint64_t seed,
                                                 Eigen::Index n = 6,
                                                 Eigen::Index count = 40,
                                                 double mu = 1e-3) {
  dataio::SynthLogisticSpec spec;
  spec.n = n;
  spec.count = count;
  spec.seed = seed;
  auto synth = dataio::synth_logistic(spec);
  return {std::move(synth.data), mu};
}

std::vector<Eigen::Index> iota(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  return idx;
}

}  // namespace

TEST_CASE("logistic loss at zero is log(2)") {
  const auto problem = small_logistic(71);
  CHECK(std::abs(problem.full_loss(Vector::Zero(problem.dim())) -
                 std::numbers::ln2) < 1e-15);
}

TEST_CASE("logistic hessian at zero is the quarter second moment") {
  const auto problem = small_logistic(72);
  const auto idx = iota(problem.sample_count());
  Matrix moment = Matrix::Zero(problem.dim(), problem.dim());
  for (auto i : idx) {
    const Vector x = problem.data().row(i);
    moment += x * x.transpose();
  }
  moment /= static_cast<double>(problem.sample_count());
  const Matrix want =
      0.25 * moment + 2.0 * problem.l2_coefficient() *
                          Matrix::Identity(problem.dim(), problem.dim());
  CHECK(rel_err(problem.exact_hessian(Vector::Zero(problem.dim()), idx), want) <
        1e-13);
}

TEST_CASE("logistic gradient passes the finite-difference oracle") {
  const auto problem = small_logistic(73);
  rng::Stream s(73);
  const Vector theta = randn(s, problem.dim());
  const auto idx = iota(problem.sample_count());
  const Vector got = problem.gradient(theta, idx);
  const Vector want = validation::fd_gradient(problem, theta, idx);
  CHECK(rel_err(got, want) < 1e-6);
}

TEST_CASE("vjp with the loss cotangent is the sample gradient") {
  const auto problem = small_logistic(74);
  rng::Stream s(74);
  const Vector theta = randn(s, problem.dim());
  for (Eigen::Index i : {0, 3, 7}) {
    const Vector w = problem.output_loss_gradient(theta, i);
    // The vjp covers the data term only; the l2 part never touches the model
    // output.
    const Vector got = problem.jacobian_vjp(theta, i, w) +
                       2.0 * problem.l2_coefficient() * theta;
    CHECK(rel_err(got, problem.sample_gradient(theta, i)) < 1e-13);
  }
}

TEST_CASE("square loss doubles: no half in front") {
  // Single linear layer, one sample: loss = |W x~ - y|^2 exactly, and the
  // output cotangent is 2 (s - y).
  rng::Stream s(75);
  const Matrix x = randn_matrix(s, 1, 3);
  const Matrix y = randn_matrix(s, 1, 2);
  models::MlpProblem problem(x, y, {3, 2}, models::Activation::sigmoid,
                             models::LossKind::square);
  const Vector theta = randn(s, problem.dim());
  const auto idx = iota(1);

  const Eigen::Map<const Matrix> w(theta.data(), 2, 4);
  Vector xt(4);
  xt << x(0, 0), x(0, 1), x(0, 2), 1.0;
  const Vector out = w * xt;
  const Vector resid = out - y.row(0).transpose();
  CHECK(std::abs(problem.loss(theta, idx) - resid.squaredNorm()) < 1e-13);
  CHECK(rel_err(problem.output_loss_gradient(theta, 0), Vector(2.0 * resid)) <
        1e-13);

  // Gradient of |W x~ - y|^2 in W is 2 (W x~ - y) x~^T.
  Matrix gw = 2.0 * resid * xt.transpose();
  CHECK(rel_err(problem.sample_gradient(theta, 0),
                Vector(Eigen::Map<const Vector>(gw.data(), gw.size()))) <
        1e-13);
}

TEST_CASE("linear net gauss-newton equals the exact hessian") {
  // With a constant jacobian the Gauss-Newton matrix is the whole hessian;
  // central differences of the gradient recover it independently.
  rng::Stream s(76);
  const Matrix x = randn_matrix(s, 5, 3);
  const Matrix y = randn_matrix(s, 5, 2);
  models::MlpProblem problem(x, y, {3, 2}, models::Activation::sigmoid,
                             models::LossKind::square);
  const Vector theta = randn(s, problem.dim());
  const auto idx = iota(5);

  const Matrix ggn = curvature::ggn_matrix(problem, theta, idx);
  Matrix fd(problem.dim(), problem.dim());
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < problem.dim(); ++j) {
    Vector tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    fd.col(j) = (problem.gradient(tp, idx) - problem.gradient(tm, idx)) /
                (2.0 * h);
  }
  CHECK(rel_err(ggn, Matrix(0.5 * (fd + fd.transpose()))) < 1e-5);
}

TEST_CASE("mlp gradients pass finite differences") {
  rng::Stream s(77);
  const Matrix x = randn_matrix(s, 6, 4);
  const Matrix y = randn_matrix(s, 6, 3);
  for (auto loss :
       {models::LossKind::square, models::LossKind::sigmoid_ce}) {
    Matrix targets = y;
    if (loss == models::LossKind::sigmoid_ce)
      targets = (y.array().tanh() * 0.5 + 0.5).matrix();  // into (0,1)
    models::MlpProblem problem(x, targets, {4, 5, 3},
                               models::Activation::sigmoid, loss);
    const Vector theta = 0.5 * randn(s, problem.dim());
    const auto idx = iota(6);
    CHECK(rel_err(problem.gradient(theta, idx),
                  validation::fd_gradient(problem, theta, idx)) < 1e-6);
  }
}

TEST_CASE("relu forward follows the hand-computed path") {
  // dims {1,1,1}: layer 0 weight [w b], relu, layer 1 weight [v c].
  Matrix x(2, 1), y(2, 1);
  x << 0.2, 1.0;
  y << 1.0, 1.0;
  models::MlpProblem problem(x, y, {1, 1, 1}, models::Activation::relu,
                             models::LossKind::square);
  Vector theta(4);
  // Column-major per layer: layer 0 maps to [w, b] = [1, -0.5],
  // layer 1 to [v, c] = [1, 0].
  theta << 1.0, -0.5, 1.0, 0.0;

  // Sample 0: s1 = 0.2 - 0.5 = -0.3, relu -> 0, out = 0, loss = (0-1)^2 = 1.
  std::vector<Eigen::Index> first{0};
  CHECK(std::abs(problem.loss(theta, first) - 1.0) < 1e-15);
  // Sample 1: s1 = 0.5, relu -> 0.5, out = 0.5, loss = 0.25.
  std::vector<Eigen::Index> second{1};
  CHECK(std::abs(problem.loss(theta, second) - 0.25) < 1e-15);

  // Dead unit blocks the gradient through layer 0 for sample 0.
  const Vector g0 = problem.sample_gradient(theta, 0);
  CHECK(g0(0) == 0.0);
  CHECK(g0(1) == 0.0);
}

TEST_CASE("mlp constructor rejects inconsistent shapes") {
  rng::Stream s(78);
  const Matrix x = randn_matrix(s, 3, 3);
  const Matrix y = randn_matrix(s, 3, 2);
  CHECK_THROWS_AS(models::MlpProblem(x, y, {4, 2}, models::Activation::sigmoid,
                                     models::LossKind::square),
                  ShapeMismatch);
  CHECK_THROWS_AS(models::MlpProblem(x, y, {3, 1}, models::Activation::sigmoid,
                                     models::LossKind::square),
                  ShapeMismatch);
  CHECK_THROWS_AS(models::MlpProblem(x, y, {3}, models::Activation::sigmoid,
                                     models::LossKind::square),
                  ConfigError);
}

TEST_CASE("radius-zero conv is per-pixel scaling") {
  rng::Stream s(79);
  const int h = 3, w = 4;
  const Matrix x = randn_matrix(s, 2, h * w);
  const Matrix y = randn_matrix(s, 2, h * w);
  models::ConvProblem problem(x, y, 1, 1, 0, h, w, models::LossKind::square);
  REQUIRE(problem.dim() == 1);
  Vector theta(1);
  theta << 1.7;
  const auto idx = iota(2);
  // Output is 1.7 * image, so the loss is |1.7 x - y|^2 averaged.
  double want = 0.0;
  for (int i = 0; i < 2; ++i)
    want += (1.7 * x.row(i) - y.row(i)).squaredNorm();
  want /= 2.0;
  CHECK(std::abs(problem.loss(theta, idx) - want) < 1e-12);
}

TEST_CASE("conv forward equals the kernel times the patch matrix") {
  rng::Stream s(80);
  const int h = 4, w = 5, cin = 2, cout = 3, radius = 1;
  const Matrix x = randn_matrix(s, 1, cin * h * w);
  const Matrix y = randn_matrix(s, 1, cout * h * w);
  models::ConvProblem problem(x, y, cin, cout, radius, h, w,
                              models::LossKind::square);
  const Vector theta = randn(s, problem.dim());
  const auto idx = iota(1);

  const auto cache = problem.forward_backward(theta, idx);
  const auto& layer = problem.layers()[0];
  const Matrix patches = problem.im2col(x.row(0).transpose());
  REQUIRE(patches.cols() == h * w);
  REQUIRE(patches.rows() == layer.a_rows());
  const Eigen::Map<const Matrix> kernel(theta.data(), layer.g_rows(),
                                        layer.a_rows());
  CHECK(rel_err(Matrix(kernel * patches), cache.layers[0].s[0]) < 1e-13);
}

TEST_CASE("layer-local pair lifts back to the full secant") {
  // After the exact-cross block update the extracted pair satisfies
  // (A (x) (G + Lam')) u = v_hat to numerical precision.
  rng::Stream s(81);
  const int ar = 3, gr = 4;  // more outputs than patch rows keeps U full rank
  models::LayerSpec layer;
  layer.kind = models::LayerSpec::Kind::dense;
  layer.in_dim = ar - 1;
  layer.out_dim = gr;
  layer.offset = 0;

  const Matrix a_hat = testutil::make_spd(s, ar, 0.5);
  const Matrix g_tilde = testutil::make_spd(s, gr, 0.5);
  const Vector u = randn(s, ar * gr);
  // v_hat consistent with some SPD refinement W keeps the cross matrix SPD,
  // so the update solves all secants undamped.
  const Matrix w = testutil::make_spd(s, gr, 0.5);
  const Vector v_hat = linalg::kron_apply(a_hat, Matrix(g_tilde + w), u);

  const auto kp = models::extract_pair_b1(layer, u, v_hat, a_hat, g_tilde);
  REQUIRE(kp.u.rows() == gr);
  REQUIRE(kp.u.cols() == ar);

  const Matrix lam0 = 0.5 * Matrix::Identity(gr, gr);
  const auto res = refinement::block_bfgs_update(
      lam0, kp.u, kp.v, refinement::PChoice::exact_cross);
  REQUIRE(res.updated);
  REQUIRE(res.tau == 1.0);
  const Vector lifted =
      linalg::kron_apply(a_hat, Matrix(g_tilde + res.lambda), u);
  CHECK((lifted - v_hat).norm() <= 1e-6 * v_hat.norm());
}

TEST_CASE("pre-activation pairs difference the captured statistics") {
  rng::Stream s(82);
  const Matrix x = randn_matrix(s, 4, 3);
  const Matrix y = randn_matrix(s, 4, 2);
  models::MlpProblem problem(x, y, {3, 4, 2}, models::Activation::sigmoid,
                             models::LossKind::square);
  const Vector theta_prev = 0.4 * randn(s, problem.dim());
  const Vector theta_next = theta_prev + 0.05 * randn(s, problem.dim());
  const auto idx = iota(4);

  const auto prev = problem.forward_backward(theta_prev, idx);
  const auto next = problem.forward_backward(theta_next, idx);
  const Matrix g_tilde = curvature::kfac_factors_from_cache(
                             next, problem.layers()[0], 0)
                             .g_tilde;

  const auto kp = models::extract_pair_b2(0, prev, next, g_tilde);
  Matrix du = Matrix::Zero(kp.u.rows(), kp.u.cols());
  Matrix dg = Matrix::Zero(kp.u.rows(), kp.u.cols());
  for (std::size_t i = 0; i < 4; ++i) {
    du += next.layers[0].s[i] - prev.layers[0].s[i];
    dg += next.layers[0].g[i] - prev.layers[0].g[i];
  }
  du /= 4.0;
  dg /= 4.0;
  CHECK(rel_err(kp.u, du) < 1e-13);
  CHECK(rel_err(kp.v, Matrix(dg - g_tilde * du)) < 1e-13);
}

TEST_CASE("structured pair target vanishes for constant jacobians") {
  const auto lr = small_logistic(83);
  rng::Stream s(83);
  const Vector a = randn(s, lr.dim());
  const Vector b = randn(s, lr.dim());
  const auto idx = iota(10);
  CHECK(models::structured_pair_v(lr, a, b, idx).norm() == 0.0);

  // A linear net is quadratic in theta: same story.
  const Matrix x = randn_matrix(s, 4, 3);
  const Matrix y = randn_matrix(s, 4, 2);
  models::MlpProblem linear(x, y, {3, 2}, models::Activation::sigmoid,
                            models::LossKind::square);
  const Vector ta = randn(s, linear.dim());
  const Vector tb = randn(s, linear.dim());
  const auto idx4 = iota(4);
  CHECK(models::structured_pair_v(linear, ta, tb, idx4).norm() < 1e-14);
}

TEST_CASE("structured pair target recombines the vjp") {
  rng::Stream s(84);
  const Matrix x = randn_matrix(s, 5, 3);
  const Matrix y = randn_matrix(s, 5, 2);
  models::MlpProblem problem(x, y, {3, 4, 2}, models::Activation::sigmoid,
                             models::LossKind::square);
  const Vector prev = 0.3 * randn(s, problem.dim());
  const Vector next = prev + 0.1 * randn(s, problem.dim());
  const auto idx = iota(5);

  Vector want = Vector::Zero(problem.dim());
  for (auto i : idx) {
    const Vector dl = problem.output_loss_gradient(next, i);
    want += problem.jacobian_vjp(next, i, dl) - problem.jacobian_vjp(prev, i, dl);
  }
  want /= static_cast<double>(idx.size());
  CHECK(rel_err(models::structured_pair_v(problem, prev, next, idx), want) <
        1e-12);
}

TEST_CASE("full loss and gradient are the whole-dataset batch") {
  const auto problem = small_logistic(85);
  rng::Stream s(85);
  const Vector theta = randn(s, problem.dim());
  const auto idx = iota(problem.sample_count());
  CHECK(problem.full_loss(theta) == problem.loss(theta, idx));
  CHECK(rel_err(problem.full_gradient(theta), problem.gradient(theta, idx)) ==
        0.0);
}
