#include "s2qn/validation.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include "s2qn/curvature.hpp"
#include "s2qn/dataio.hpp"
#include "s2qn/errors.hpp"
#include "s2qn/refinement.hpp"
#include "s2qn/rng.hpp"
#include "s2qn/solver.hpp"

namespace s2qn::validation {

Matrix recursive_bfgs_oracle(
    double gamma, const std::vector<std::pair<Vector, Vector>>& pairs) {
  if (pairs.empty()) {
    throw DimensionMismatch("recursive_bfgs_oracle: needs at least one pair");
  }
  const Eigen::Index n = pairs.front().first.size();
  Matrix lam = gamma * Matrix::Identity(n, n);
  for (const auto& [u, v] : pairs) {
    const Vector lu = lam * u;
    lam -= (lu * lu.transpose()) / u.dot(lu);
    lam += (v * v.transpose()) / v.dot(u);
  }
  return lam;
}

Vector fd_gradient(const models::Problem& problem, const Vector& theta,
                   models::Batch batch, double step) {
  Vector g(theta.size());
  Vector t = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double saved = t(i);
    const double h = step * (1.0 + std::abs(saved));
    t(i) = saved + h;
    const double up = problem.loss(t, batch);
    t(i) = saved - h;
    const double down = problem.loss(t, batch);
    t(i) = saved;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

Matrix dense_kron_oracle(const Matrix& a, const Matrix& g) {
  Matrix out(a.rows() * g.rows(), a.cols() * g.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * g.rows(), j * g.cols(), g.rows(), g.cols()) = a(i, j) * g;
    }
  }
  return out;
}

Matrix conv_forward_oracle(const Vector& theta, const Vector& image,
                           int in_channels, int out_channels, int radius,
                           int height, int width) {
  const int side = 2 * radius + 1;
  const int window = side * side;
  Matrix out = Matrix::Zero(out_channels, static_cast<Eigen::Index>(height) * width);
  for (int o = 0; o < out_channels; ++o) {
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        double acc = 0.0;
        for (int j = 0; j < in_channels; ++j) {
          for (int dr = -radius; dr <= radius; ++dr) {
            for (int dc = -radius; dc <= radius; ++dc) {
              const int rr = r + dr;
              const int cc = c + dc;
              if (rr < 0 || rr >= height || cc < 0 || cc >= width) continue;
              const Eigen::Index col =
                  static_cast<Eigen::Index>(j) * window +
                  (dr + radius) * side + (dc + radius);
              acc += theta(o + static_cast<Eigen::Index>(out_channels) * col) *
                     image(static_cast<Eigen::Index>(j) * height * width +
                           rr * width + cc);
            }
          }
        }
        out(o, static_cast<Eigen::Index>(r) * width + c) = acc;
      }
    }
  }
  return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector randn(rng::Stream& s, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = s.next_gaussian();
  return v;
}

Matrix randn_matrix(rng::Stream& s, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = s.next_gaussian();
  }
  return m;
}

Matrix make_spd(rng::Stream& s, Eigen::Index n, double shift = 0.5) {
  const Matrix m = randn_matrix(s, n, n);
  Matrix spd = (m * m.transpose()) / static_cast<double>(n);
  spd.diagonal().array() += shift;
  return spd;
}

// (u, v) pairs with guaranteed positive curvature: v = W u with W SPD.
std::vector<std::pair<Vector, Vector>> make_pairs(rng::Stream& s,
                                                  Eigen::Index n, int count) {
  const Matrix w = make_spd(s, n, 0.8);
  std::vector<std::pair<Vector, Vector>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Vector u = randn(s, n);
    out.emplace_back(u, Vector(w * u));
  }
  return out;
}

refinement::PairBuffer buffer_from(
    const std::vector<std::pair<Vector, Vector>>& pairs) {
  refinement::PairBuffer buf;
  buf.capacity = static_cast<int>(pairs.size());
  for (const auto& [u, v] : pairs) {
    refinement::CurvaturePair p;
    p.u = u;
    p.v = v;
    buf.push(std::move(p));
  }
  return buf;
}

double rel_inf(const Vector& got, const Vector& want) {
  const double scale = std::max(1.0, want.lpNorm<Eigen::Infinity>());
  return (got - want).lpNorm<Eigen::Infinity>() / scale;
}

double rel_inf(const Matrix& got, const Matrix& want) {
  const double scale = std::max(1.0, want.lpNorm<Eigen::Infinity>());
  return (got - want).lpNorm<Eigen::Infinity>() / scale;
}

void add(std::vector<CheckResult>& out, const std::string& suite,
         const std::string& name, double error, double tolerance) {
  CheckResult r;
  r.suite = suite;
  r.name = name;
  r.error = error;
  r.tolerance = tolerance;
  r.passed = std::isfinite(error) && error <= tolerance;
  out.push_back(std::move(r));
}

std::vector<CheckResult> suite_dense_inverse() {
  std::vector<CheckResult> out;
  rng::Stream s(101);
  const Eigen::Index n = 7;
  const Matrix a = make_spd(s, n, 1.0);
  const Matrix inv = linalg::dense_inverse_oracle(a);
  add(out, "dense-inverse", "inverse-residual",
      (a * inv - Matrix::Identity(n, n)).lpNorm<Eigen::Infinity>(), 1e-9);

  const Vector b = randn(s, n);
  const linalg::SymCholesky chol(a);
  add(out, "dense-inverse", "cholesky-agrees", rel_inf(chol.solve(b), Vector(inv * b)),
      1e-9);

  bool threw = false;
  try {
    const Matrix rank1 = Matrix::Ones(4, 4);
    (void)linalg::dense_inverse_oracle(rank1);
  } catch (const Singular&) {
    threw = true;
  }
  add(out, "dense-inverse", "singular-detected", threw ? 0.0 : 1.0, 0.0);
  return out;
}

std::vector<CheckResult> suite_smw() {
  std::vector<CheckResult> out;
  rng::Stream s(202);
  const Eigen::Index n = 6;
  const Matrix h = make_spd(s, n, 0.6);
  const auto pairs = make_pairs(s, n, 3);
  const double gamma = 1.2;
  const double lambda = 0.3;
  const Vector g = randn(s, n);

  const auto comp =
      refinement::build_compact(buffer_from(pairs), gamma, n);
  const Vector d = solver::direction_smw(h, comp, lambda, g);

  Matrix b = h + recursive_bfgs_oracle(gamma, pairs);
  b.diagonal().array() += lambda;
  const Vector d_ref = -(linalg::dense_inverse_oracle(b) * g);
  add(out, "smw", "direction-agrees", rel_inf(d, d_ref), 1e-8);

  const refinement::CompactLbfgs none(0.0, n);
  Matrix plain = h;
  plain.diagonal().array() += lambda;
  const Vector d0_ref = -(linalg::dense_inverse_oracle(plain) * g);
  add(out, "smw", "empty-refinement",
      rel_inf(solver::direction_smw(h, none, lambda, g), d0_ref), 1e-9);
  return out;
}

std::vector<CheckResult> suite_lowrank() {
  std::vector<CheckResult> out;
  rng::Stream s(303);
  const Eigen::Index n = 8;
  const Eigen::Index r = 3;
  linalg::LowRankFactor q;
  q.q = randn_matrix(s, n, r) / std::sqrt(static_cast<double>(r));
  const auto pairs = make_pairs(s, n, 2);
  const double gamma = 0.9;
  const double lambda = 0.4;
  const Vector g = randn(s, n);

  const auto comp = refinement::build_compact(buffer_from(pairs), gamma, n);
  const Vector d = solver::direction_lowrank(q, comp, lambda, g);

  Matrix b = q.q * q.q.transpose() + recursive_bfgs_oracle(gamma, pairs);
  b.diagonal().array() += lambda;
  const Vector d_ref = -(linalg::dense_inverse_oracle(b) * g);
  add(out, "lowrank", "direction-agrees", rel_inf(d, d_ref), 1e-8);

  const refinement::CompactLbfgs none(0.0, n);
  Matrix plain = q.q * q.q.transpose();
  plain.diagonal().array() += lambda;
  add(out, "lowrank", "empty-refinement",
      rel_inf(solver::direction_lowrank(q, none, lambda, g),
              Vector(-(linalg::dense_inverse_oracle(plain) * g))),
      1e-9);
  return out;
}

std::vector<CheckResult> suite_kron() {
  std::vector<CheckResult> out;
  rng::Stream s(404);
  const Eigen::Index ma = 4;
  const Eigen::Index mg = 3;
  const Matrix a = make_spd(s, ma, 0.7);
  const Matrix gt = make_spd(s, mg, 0.5);
  const Matrix lam_block = make_spd(s, mg, 0.2) * 0.5;
  const double lambda = 0.25;
  const Vector g = randn(s, ma * mg);

  const Vector x = randn(s, ma * mg);
  add(out, "kron", "apply-matches-dense",
      rel_inf(linalg::kron_apply(a, gt, x), Vector(dense_kron_oracle(a, gt) * x)),
      1e-10);

  Matrix b = dense_kron_oracle(a, Matrix(gt + lam_block));
  b.diagonal().array() += lambda;
  add(out, "kron", "exact-direction",
      rel_inf(solver::direction_kron(a, gt, lam_block, lambda, g,
                                     solver::KronMode::exact),
              Vector(-(linalg::dense_inverse_oracle(b) * g))),
      1e-8);

  const double shift = std::sqrt(lambda);
  Matrix a_s = a;
  a_s.diagonal().array() += shift;
  Matrix m_s = gt + lam_block;
  m_s.diagonal().array() += shift;
  const Matrix b_split = dense_kron_oracle(a_s, m_s);
  add(out, "kron", "pi-split-direction",
      rel_inf(solver::direction_kron(a, gt, lam_block, lambda, g,
                                     solver::KronMode::pi_split),
              Vector(-(linalg::dense_inverse_oracle(b_split) * g))),
      1e-8);

  const auto pairs = make_pairs(s, ma * mg, 2);
  const double gamma = 1.1;
  const auto comp = refinement::build_compact(buffer_from(pairs), gamma, ma * mg);
  Matrix b2 = dense_kron_oracle(a, gt) + recursive_bfgs_oracle(gamma, pairs);
  b2.diagonal().array() += lambda;
  add(out, "kron", "compact-direction",
      rel_inf(solver::direction_kron_compact(a, gt, comp, lambda, g),
              Vector(-(linalg::dense_inverse_oracle(b2) * g))),
      1e-8);
  return out;
}

std::vector<CheckResult> suite_secant() {
  std::vector<CheckResult> out;
  rng::Stream s(505);
  const Eigen::Index n = 9;
  const auto pairs = make_pairs(s, n, 4);
  const double gamma = 1.3;
  const auto comp = refinement::build_compact(buffer_from(pairs), gamma, n);
  const Matrix lam_ref = recursive_bfgs_oracle(gamma, pairs);
  add(out, "secant", "compact-equals-recursive",
      rel_inf(comp.materialize(), lam_ref), 1e-9);

  const auto& [u_new, v_new] = pairs.back();
  add(out, "secant", "newest-secant",
      rel_inf(comp.apply(u_new), v_new), 1e-8);

  // Worked damping point: u = e1, v = -e1 against Lam = I must damp with
  // tau = 0.4 and land exactly on v' = 0.2 e1.
  {
    refinement::PairBuffer buf;
    buf.powell_damping = true;
    refinement::CurvaturePair pair;
    pair.u = Vector::Zero(3);
    pair.u(0) = 1.0;
    pair.v = -pair.u;
    const auto outcome = refinement::accept_pair(
        pair, buf, [](const Vector& x) { return x; });
    Vector expect = Vector::Zero(3);
    expect(0) = 0.2;
    const double err =
        outcome == refinement::AcceptOutcome::damped
            ? (pair.v - expect).lpNorm<Eigen::Infinity>()
            : kInf;
    add(out, "secant", "powell-damping-point", err, 1e-15);
  }

  // Multi-secant block identity Lam' U = V under the cross-term choice.
  {
    const Eigen::Index m = 6;
    const Matrix lam0 = make_spd(s, m, 0.9);
    const Matrix u = randn_matrix(s, m, 3);
    const Matrix w = make_spd(s, m, 0.7);
    const Matrix v = w * u;
    const auto res = refinement::block_bfgs_update(
        lam0, u, v, refinement::PChoice::exact_cross);
    add(out, "secant", "block-exact-cross",
        res.updated ? rel_inf(Matrix(res.lambda * u), v) : kInf, 1e-8);

    refinement::SketchConfig sk;
    sk.dim = 3;  // equals the column count: the subsample must be the identity
    sk.dist = refinement::SketchConfig::Dist::row_subsample;
    const auto direct = refinement::block_bfgs_update(
        lam0, u, v, refinement::PChoice::symmetric);
    const auto sketched = refinement::sketchy_block_bfgs_update(
        lam0, u, v, sk, refinement::PChoice::symmetric, 999);
    const bool identical =
        direct.lambda.rows() == sketched.lambda.rows() &&
        (direct.lambda.array() == sketched.lambda.array()).all();
    add(out, "secant", "identity-sketch-bitwise", identical ? 0.0 : 1.0, 0.0);
  }
  return out;
}

std::vector<CheckResult> suite_gradients() {
  std::vector<CheckResult> out;
  rng::Stream s(606);

  dataio::SynthLogisticSpec spec;
  spec.n = 6;
  spec.count = 40;
  spec.seed = 7;
  const auto synth = dataio::synth_logistic(spec);
  const models::LogisticRegressionProblem lr(synth.data, 1e-3);
  const auto all = [](Eigen::Index n) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
  };
  const auto lr_idx = all(lr.sample_count());
  const Vector lr_theta = 0.3 * randn(s, lr.dim());
  add(out, "gradients", "logistic-fd",
      rel_inf(lr.gradient(lr_theta, lr_idx), fd_gradient(lr, lr_theta, lr_idx)),
      1e-7);

  const Matrix xin = randn_matrix(s, 8, 4);
  const Matrix ysq = randn_matrix(s, 8, 3);
  const models::MlpProblem mlp_sq(xin, ysq, {4, 5, 3}, models::Activation::sigmoid,
                                  models::LossKind::square);
  const auto mlp_idx = all(mlp_sq.sample_count());
  const Vector mlp_theta = 0.4 * randn(s, mlp_sq.dim());
  add(out, "gradients", "mlp-square-fd",
      rel_inf(mlp_sq.gradient(mlp_theta, mlp_idx),
              fd_gradient(mlp_sq, mlp_theta, mlp_idx)),
      1e-7);

  Matrix yce = randn_matrix(s, 8, 3);
  yce = (yce.array() > 0.0).cast<double>();
  const models::MlpProblem mlp_ce(xin, yce, {4, 5, 3}, models::Activation::sigmoid,
                                  models::LossKind::sigmoid_ce);
  add(out, "gradients", "mlp-ce-fd",
      rel_inf(mlp_ce.gradient(mlp_theta, mlp_idx),
              fd_gradient(mlp_ce, mlp_theta, mlp_idx)),
      1e-7);

  // The per-sample gradient must be the VJP of the output-loss gradient.
  double worst = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i) {
    const Vector want = mlp_sq.sample_gradient(mlp_theta, i);
    const Vector got = mlp_sq.jacobian_vjp(
        mlp_theta, i, mlp_sq.output_loss_gradient(mlp_theta, i));
    worst = std::max(worst, rel_inf(got, want));
  }
  add(out, "gradients", "vjp-assembles-gradient", worst, 1e-12);
  return out;
}

std::vector<CheckResult> suite_conv() {
  std::vector<CheckResult> out;
  rng::Stream s(707);
  const int cin = 2, cout = 3, radius = 1, h = 4, w = 5;
  const Eigen::Index img_len = static_cast<Eigen::Index>(cin) * h * w;
  const Eigen::Index out_len = static_cast<Eigen::Index>(cout) * h * w;

  const Matrix inputs = randn_matrix(s, 6, img_len);
  const Matrix targets = randn_matrix(s, 6, out_len);
  const models::ConvProblem conv(inputs, targets, cin, cout, radius, h, w,
                                 models::LossKind::square);
  const Vector theta = 0.5 * randn(s, conv.dim());

  // im2col forward against the direct nested-loop convolution.
  const Vector image = inputs.row(0).transpose();
  const Matrix a = conv.im2col(image);
  const Eigen::Map<const Matrix> kmat(theta.data(), cout,
                                      static_cast<Eigen::Index>(cin) * 9);
  add(out, "conv", "forward-matches-direct",
      rel_inf(Matrix(kmat * a),
              conv_forward_oracle(theta, image, cin, cout, radius, h, w)),
      1e-12);

  std::vector<Eigen::Index> idx(6);
  for (Eigen::Index i = 0; i < 6; ++i) idx[static_cast<std::size_t>(i)] = i;
  add(out, "conv", "gradient-fd",
      rel_inf(conv.gradient(theta, idx), fd_gradient(conv, theta, idx)), 1e-6);

  // radius 0 degenerates to an independent per-pixel linear map.
  const models::ConvProblem point(inputs, targets, cin, cout, 0, h, w,
                                  models::LossKind::square);
  const Vector theta0 = randn(s, point.dim());
  add(out, "conv", "radius-zero-fd",
      rel_inf(point.gradient(theta0, idx), fd_gradient(point, theta0, idx)),
      1e-6);
  return out;
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"dense-inverse", "smw",       "lowrank", "kron",
          "secant",        "gradients", "conv"};
}

std::vector<CheckResult> run_suite(const std::string& name) {
  if (name == "dense-inverse") return suite_dense_inverse();
  if (name == "smw") return suite_smw();
  if (name == "lowrank") return suite_lowrank();
  if (name == "kron") return suite_kron();
  if (name == "secant") return suite_secant();
  if (name == "gradients") return suite_gradients();
  if (name == "conv") return suite_conv();
  throw ConfigError("unknown validation suite '" + name + "'");
}

std::vector<CheckResult> run_suites(const std::string& filter) {
  std::vector<CheckResult> out;
  for (const auto& name : suite_names()) {
    if (!filter.empty() && name.find(filter) == std::string::npos) continue;
    auto part = run_suite(name);
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

}  // namespace s2qn::validation
