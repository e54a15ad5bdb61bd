#include <cmath>
#include <utility>

#include "s2qn/models.hpp"

namespace s2qn::models {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) {
  if (t > 35.0) return t;
  if (t < -35.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

Matrix activate(Activation act, const Matrix& s) {
  if (act == Activation::sigmoid) {
    return s.unaryExpr([](double t) { return sigmoid(t); });
  }
  return s.cwiseMax(0.0);
}

// Derivative through the stored pre-activation; relu takes 0 at the kink.
Matrix activate_prime(Activation act, const Matrix& s) {
  if (act == Activation::sigmoid) {
    return s.unaryExpr([](double t) {
      const double p = sigmoid(t);
      return p * (1.0 - p);
    });
  }
  return s.unaryExpr([](double t) { return t > 0.0 ? 1.0 : 0.0; });
}

// Sum of elementwise losses over every entry of f.
double loss_sum(LossKind kind, const Matrix& f, const Matrix& y) {
  if (kind == LossKind::square) {
    return (f - y).squaredNorm();
  }
  double acc = 0.0;
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      acc += softplus(f(r, c)) - y(r, c) * f(r, c);
    }
  }
  return acc;
}

// Columns of f are batch samples; per-sample loss sums over output units.
double batch_loss(LossKind kind, const Matrix& f, const Matrix& y) {
  return loss_sum(kind, f, y) / static_cast<double>(f.cols());
}

// Per-sample d(loss)/d(output), columns matching f's.
Matrix loss_backward(LossKind kind, const Matrix& f, const Matrix& y) {
  if (kind == LossKind::square) {
    return 2.0 * (f - y);
  }
  return f.unaryExpr([](double t) { return sigmoid(t); }) - y;
}

// Diagonal of the output-space loss Hessian for one sample.
Vector loss_output_curvature(LossKind kind, const Vector& f) {
  if (kind == LossKind::square) {
    return Vector::Constant(f.size(), 2.0);
  }
  return f.unaryExpr([](double t) {
    const double p = sigmoid(t);
    return p * (1.0 - p);
  });
}

void check_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) {
    throw NonFiniteActivation(std::string("non-finite values in ") + where);
  }
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "' (sigmoid, relu)");
}

LossKind loss_from_string(const std::string& s) {
  if (s == "square") return LossKind::square;
  if (s == "sigmoid-ce" || s == "cross-entropy") return LossKind::sigmoid_ce;
  throw ConfigError("unknown loss '" + s + "' (square, sigmoid-ce)");
}

int LayerSpec::a_rows() const {
  return kind == Kind::dense ? in_dim + 1 : in_channels * window();
}

int LayerSpec::g_rows() const {
  return kind == Kind::dense ? out_dim : out_channels;
}

// ---------------------------------------------------------------------------
// Fully-connected net

MlpProblem::MlpProblem(Matrix inputs, Matrix targets, std::vector<int> dims,
                       Activation act, LossKind loss_kind)
    : inputs_(std::move(inputs)),
      targets_(std::move(targets)),
      dims_(std::move(dims)),
      act_(act),
      loss_kind_(loss_kind) {
  if (dims_.size() < 2) {
    throw ConfigError("mlp: need at least input and output dims");
  }
  for (int d : dims_) {
    if (d < 1) throw ConfigError("mlp: layer dims must be positive");
  }
  if (inputs_.cols() != dims_.front()) {
    throw ShapeMismatch("mlp: input width does not match dims[0]");
  }
  if (targets_.cols() != dims_.back()) {
    throw ShapeMismatch("mlp: target width does not match dims.back()");
  }
  if (targets_.rows() != inputs_.rows()) {
    throw ShapeMismatch("mlp: inputs and targets disagree on sample count");
  }
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    LayerSpec spec;
    spec.kind = LayerSpec::Kind::dense;
    spec.in_dim = dims_[l];
    spec.out_dim = dims_[l + 1];
    spec.offset = offset;
    offset += spec.param_count();
    layers_.push_back(spec);
  }
  dim_ = offset;
}

namespace {

// Weight view for one dense layer: out_dim x (in_dim+1), column-major slice.
Eigen::Map<const Matrix> dense_weight(const Vector& theta,
                                      const LayerSpec& layer) {
  return Eigen::Map<const Matrix>(theta.data() + layer.offset, layer.g_rows(),
                                  layer.a_rows());
}

Matrix append_ones_row(const Matrix& a) {
  Matrix out(a.rows() + 1, a.cols());
  out.topRows(a.rows()) = a;
  out.row(a.rows()).setOnes();
  return out;
}

struct MlpPass {
  std::vector<Matrix> a_tilde;  // per layer, (in+1) x B
  std::vector<Matrix> s;        // per layer, out x B
  Matrix output;                // top pre-activation, out x B
};

MlpPass mlp_forward(const Vector& theta, const std::vector<LayerSpec>& layers,
                    Activation act, const Matrix& batch_inputs) {
  MlpPass pass;
  Matrix a = batch_inputs;  // d x B
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix at = append_ones_row(a);
    Matrix s = dense_weight(theta, layers[l]) * at;
    check_finite(s, "dense layer pre-activation");
    pass.a_tilde.push_back(std::move(at));
    if (l + 1 < layers.size()) {
      a = activate(act, s);
    }
    pass.s.push_back(std::move(s));
  }
  pass.output = pass.s.back();
  return pass;
}

// Backward from per-sample output cotangents; returns the mean parameter
// gradient and per-layer per-sample pre-activation gradients.
Vector mlp_backward(const Vector& theta, const std::vector<LayerSpec>& layers,
                    Activation act, const MlpPass& pass, const Matrix& g_top,
                    std::vector<Matrix>* g_layers, bool mean_over_batch) {
  const Eigen::Index batch_size = g_top.cols();
  Vector grad = Vector::Zero(theta.size());
  if (g_layers) g_layers->assign(layers.size(), Matrix());

  Matrix g = g_top;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    if (g_layers) (*g_layers)[l] = g;
    Matrix dw = g * pass.a_tilde[l].transpose();
    if (mean_over_batch) dw /= static_cast<double>(batch_size);
    Eigen::Map<Matrix>(grad.data() + layer.offset, layer.g_rows(),
                       layer.a_rows()) = dw;
    if (l > 0) {
      const auto w = dense_weight(theta, layer);
      Matrix da = w.topLeftCorner(layer.out_dim, layer.in_dim).transpose() * g;
      g = da.cwiseProduct(activate_prime(act, pass.s[l - 1]));
    }
  }
  return grad;
}

}  // namespace

double MlpProblem::loss(const Vector& theta, Batch batch) const {
  if (batch.empty()) throw DimensionMismatch("mlp loss: empty batch");
  Matrix x(dims_.front(), static_cast<Eigen::Index>(batch.size()));
  Matrix y(dims_.back(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    x.col(static_cast<Eigen::Index>(b)) = inputs_.row(batch[b]).transpose();
    y.col(static_cast<Eigen::Index>(b)) = targets_.row(batch[b]).transpose();
  }
  const MlpPass pass = mlp_forward(theta, layers_, act_, x);
  const double value = batch_loss(loss_kind_, pass.output, y);
  if (!std::isfinite(value)) throw NonFiniteLoss("mlp loss is not finite");
  return value;
}

Vector MlpProblem::gradient(const Vector& theta, Batch batch) const {
  if (batch.empty()) throw DimensionMismatch("mlp gradient: empty batch");
  Matrix x(dims_.front(), static_cast<Eigen::Index>(batch.size()));
  Matrix y(dims_.back(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    x.col(static_cast<Eigen::Index>(b)) = inputs_.row(batch[b]).transpose();
    y.col(static_cast<Eigen::Index>(b)) = targets_.row(batch[b]).transpose();
  }
  const MlpPass pass = mlp_forward(theta, layers_, act_, x);
  const Matrix g_top = loss_backward(loss_kind_, pass.output, y);
  return mlp_backward(theta, layers_, act_, pass, g_top, nullptr, true);
}

Vector MlpProblem::sample_gradient(const Vector& theta, Eigen::Index i) const {
  const Eigen::Index idx[] = {i};
  return gradient(theta, Batch(idx, 1));
}

ForwardCache MlpProblem::forward_backward(const Vector& theta,
                                          Batch batch) const {
  if (batch.empty()) throw DimensionMismatch("mlp forward: empty batch");
  Matrix x(dims_.front(), static_cast<Eigen::Index>(batch.size()));
  Matrix y(dims_.back(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    x.col(static_cast<Eigen::Index>(b)) = inputs_.row(batch[b]).transpose();
    y.col(static_cast<Eigen::Index>(b)) = targets_.row(batch[b]).transpose();
  }
  const MlpPass pass = mlp_forward(theta, layers_, act_, x);
  const Matrix g_top = loss_backward(loss_kind_, pass.output, y);

  ForwardCache cache;
  cache.batch.assign(batch.begin(), batch.end());
  cache.loss = batch_loss(loss_kind_, pass.output, y);
  if (!std::isfinite(cache.loss)) throw NonFiniteLoss("mlp loss is not finite");

  std::vector<Matrix> g_layers;
  cache.gradient =
      mlp_backward(theta, layers_, act_, pass, g_top, &g_layers, true);

  cache.layers.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& lc = cache.layers[l];
    const Eigen::Index cols = static_cast<Eigen::Index>(batch.size());
    lc.a.reserve(batch.size());
    lc.s.reserve(batch.size());
    lc.g.reserve(batch.size());
    for (Eigen::Index b = 0; b < cols; ++b) {
      lc.a.push_back(pass.a_tilde[l].col(b));
      lc.s.push_back(pass.s[l].col(b));
      lc.g.push_back(g_layers[l].col(b));
    }
  }
  return cache;
}

Matrix MlpProblem::ggn_factor(const Vector& theta, Eigen::Index i) const {
  Matrix x = inputs_.row(i).transpose();
  const MlpPass pass = mlp_forward(theta, layers_, act_, x);
  const Vector f = pass.output.col(0);
  const Vector h = loss_output_curvature(loss_kind_, f);

  const Eigen::Index m = dims_.back();
  Matrix factor(dim_, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    Matrix e = Matrix::Zero(m, 1);
    e(j, 0) = 1.0;
    factor.col(j) = std::sqrt(h(j)) *
                    mlp_backward(theta, layers_, act_, pass, e, nullptr, false);
  }
  return factor;
}

Vector MlpProblem::jacobian_vjp(const Vector& theta, Eigen::Index i,
                                const Vector& w) const {
  if (w.size() != dims_.back()) {
    throw DimensionMismatch("mlp vjp: cotangent length mismatch");
  }
  Matrix x = inputs_.row(i).transpose();
  const MlpPass pass = mlp_forward(theta, layers_, act_, x);
  return mlp_backward(theta, layers_, act_, pass, w, nullptr, false);
}

Vector MlpProblem::output_loss_gradient(const Vector& theta,
                                        Eigen::Index i) const {
  Matrix x = inputs_.row(i).transpose();
  Matrix y = targets_.row(i).transpose();
  const MlpPass pass = mlp_forward(theta, layers_, act_, x);
  return loss_backward(loss_kind_, pass.output, y).col(0);
}

// ---------------------------------------------------------------------------
// Single convolutional layer

ConvProblem::ConvProblem(Matrix inputs, Matrix targets, int in_channels,
                         int out_channels, int radius, int height, int width,
                         LossKind loss_kind)
    : inputs_(std::move(inputs)),
      targets_(std::move(targets)),
      loss_kind_(loss_kind) {
  if (in_channels < 1 || out_channels < 1 || height < 1 || width < 1 ||
      radius < 0) {
    throw ConfigError("conv: channels and grid must be positive, radius >= 0");
  }
  layer_.kind = LayerSpec::Kind::conv;
  layer_.in_channels = in_channels;
  layer_.out_channels = out_channels;
  layer_.radius = radius;
  layer_.height = height;
  layer_.width = width;
  layer_.offset = 0;
  layers_.push_back(layer_);

  if (inputs_.cols() != static_cast<Eigen::Index>(in_channels) * height * width) {
    throw ShapeMismatch("conv: input width does not match channels*grid");
  }
  if (targets_.cols() !=
      static_cast<Eigen::Index>(out_channels) * height * width) {
    throw ShapeMismatch("conv: target width does not match channels*grid");
  }
  if (targets_.rows() != inputs_.rows()) {
    throw ShapeMismatch("conv: inputs and targets disagree on sample count");
  }
}

Matrix ConvProblem::im2col(const Vector& image) const {
  const int h = layer_.height;
  const int w = layer_.width;
  const int k = layer_.radius;
  const int side = 2 * k + 1;
  const int window = layer_.window();
  if (image.size() != static_cast<Eigen::Index>(layer_.in_channels) * h * w) {
    throw ShapeMismatch("im2col: image size mismatch");
  }
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(layer_.in_channels) * window,
                          static_cast<Eigen::Index>(h) * w);
  for (int j = 0; j < layer_.in_channels; ++j) {
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const int t = r * w + c;
        for (int dr = -k; dr <= k; ++dr) {
          for (int dc = -k; dc <= k; ++dc) {
            const int rr = r + dr;
            const int cc = c + dc;
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;  // zero pad
            const int widx = (dr + k) * side + (dc + k);
            a(static_cast<Eigen::Index>(j) * window + widx, t) =
                image(static_cast<Eigen::Index>(j) * h * w + rr * w + cc);
          }
        }
      }
    }
  }
  return a;
}

namespace {

Eigen::Map<const Matrix> conv_weight(const Vector& theta,
                                     const LayerSpec& layer) {
  return Eigen::Map<const Matrix>(theta.data(), layer.g_rows(), layer.a_rows());
}

// Rows of a column-major matrix are strided, so the target grid has to be
// materialized before it can be viewed out_channels x spatial.
Matrix target_grid(const Matrix& targets, Eigen::Index i, const LayerSpec& l) {
  const Vector row = targets.row(i).transpose();
  return Eigen::Map<const Matrix>(row.data(), l.out_channels, l.spatial());
}

}  // namespace

double ConvProblem::loss(const Vector& theta, Batch batch) const {
  if (batch.empty()) throw DimensionMismatch("conv loss: empty batch");
  const auto w = conv_weight(theta, layer_);
  double acc = 0.0;
  for (const Eigen::Index i : batch) {
    const Matrix a = im2col(inputs_.row(i).transpose());
    const Matrix s = w * a;
    check_finite(s, "conv pre-activation");
    acc += loss_sum(loss_kind_, s, target_grid(targets_, i, layer_));
  }
  const double value = acc / static_cast<double>(batch.size());
  if (!std::isfinite(value)) throw NonFiniteLoss("conv loss is not finite");
  return value;
}

Vector ConvProblem::gradient(const Vector& theta, Batch batch) const {
  if (batch.empty()) throw DimensionMismatch("conv gradient: empty batch");
  const auto w = conv_weight(theta, layer_);
  Matrix dw = Matrix::Zero(layer_.g_rows(), layer_.a_rows());
  for (const Eigen::Index i : batch) {
    const Matrix a = im2col(inputs_.row(i).transpose());
    const Matrix s = w * a;
    check_finite(s, "conv pre-activation");
    const Matrix g =
        loss_backward(loss_kind_, s, target_grid(targets_, i, layer_));
    dw.noalias() += g * a.transpose();
  }
  dw /= static_cast<double>(batch.size());
  return Eigen::Map<const Vector>(dw.data(), dw.size());
}

Vector ConvProblem::sample_gradient(const Vector& theta, Eigen::Index i) const {
  const Eigen::Index idx[] = {i};
  return gradient(theta, Batch(idx, 1));
}

ForwardCache ConvProblem::forward_backward(const Vector& theta,
                                           Batch batch) const {
  if (batch.empty()) throw DimensionMismatch("conv forward: empty batch");
  const auto w = conv_weight(theta, layer_);

  ForwardCache cache;
  cache.batch.assign(batch.begin(), batch.end());
  cache.layers.resize(1);
  auto& lc = cache.layers[0];

  Matrix dw = Matrix::Zero(layer_.g_rows(), layer_.a_rows());
  double acc = 0.0;
  for (const Eigen::Index i : batch) {
    Matrix a = im2col(inputs_.row(i).transpose());
    Matrix s = w * a;
    check_finite(s, "conv pre-activation");
    const Matrix y = target_grid(targets_, i, layer_);
    Matrix g = loss_backward(loss_kind_, s, y);
    acc += loss_sum(loss_kind_, s, y);
    dw.noalias() += g * a.transpose();
    lc.a.push_back(std::move(a));
    lc.s.push_back(std::move(s));
    lc.g.push_back(std::move(g));
  }
  dw /= static_cast<double>(batch.size());
  cache.gradient = Eigen::Map<const Vector>(dw.data(), dw.size());
  cache.loss = acc / static_cast<double>(batch.size());
  if (!std::isfinite(cache.loss)) throw NonFiniteLoss("conv loss is not finite");
  return cache;
}

Matrix ConvProblem::ggn_factor(const Vector& theta, Eigen::Index i) const {
  const auto w = conv_weight(theta, layer_);
  const Matrix a = im2col(inputs_.row(i).transpose());
  const Matrix s = w * a;
  const Eigen::Index cout = layer_.g_rows();
  const Eigen::Index spatial = layer_.spatial();
  Matrix factor = Matrix::Zero(dim(), cout * spatial);
  for (Eigen::Index t = 0; t < spatial; ++t) {
    const Vector h = loss_output_curvature(loss_kind_, s.col(t));
    // d f_{i,t} / d theta = kron(a_col_t, e_i) under column-major vec.
    for (Eigen::Index io = 0; io < cout; ++io) {
      const double scale = std::sqrt(h(io));
      for (Eigen::Index c = 0; c < a.rows(); ++c) {
        factor(io + cout * c, io + cout * t) = scale * a(c, t);
      }
    }
  }
  return factor;
}

Vector ConvProblem::jacobian_vjp(const Vector&, Eigen::Index i,
                                 const Vector& w) const {
  if (w.size() != output_dim()) {
    throw DimensionMismatch("conv vjp: cotangent length mismatch");
  }
  const Matrix a = im2col(inputs_.row(i).transpose());
  const Eigen::Map<const Matrix> wm(w.data(), layer_.out_channels,
                                    layer_.spatial());
  const Matrix dw = wm * a.transpose();
  return Eigen::Map<const Vector>(dw.data(), dw.size());
}

Vector ConvProblem::output_loss_gradient(const Vector& theta,
                                         Eigen::Index i) const {
  const auto w = conv_weight(theta, layer_);
  const Matrix a = im2col(inputs_.row(i).transpose());
  const Matrix s = w * a;
  const Matrix g =
      loss_backward(loss_kind_, s, target_grid(targets_, i, layer_));
  return Eigen::Map<const Vector>(g.data(), g.size());
}

// ---------------------------------------------------------------------------
// Kronecker block pairs

KronPair extract_pair_b1(const LayerSpec& layer, const Vector& u_full,
                         const Vector& v_hat_full, const Matrix& a_hat,
                         const Matrix& g_tilde) {
  if (u_full.size() != v_hat_full.size() ||
      u_full.size() < layer.offset + layer.param_count()) {
    throw ShapeMismatch("kron pair: parameter vectors do not cover the layer");
  }
  if (a_hat.rows() != layer.a_rows() || g_tilde.rows() != layer.g_rows()) {
    throw ShapeMismatch("kron pair: factor dimensions do not match the layer");
  }
  const Eigen::Map<const Matrix> u_mat(u_full.data() + layer.offset,
                                       layer.g_rows(), layer.a_rows());
  const Eigen::Map<const Matrix> v_mat(v_hat_full.data() + layer.offset,
                                       layer.g_rows(), layer.a_rows());
  KronPair pair;
  // Lam * (U A) = V - G U A  lifts to  (A (x) (G + Lam)) u = v_hat.
  pair.u = u_mat * a_hat;
  pair.v = v_mat - g_tilde * pair.u;
  return pair;
}

KronPair extract_pair_b2(std::size_t layer_index, const ForwardCache& prev,
                         const ForwardCache& next, const Matrix& g_tilde) {
  if (prev.empty() || next.empty()) {
    throw EmptyCache("kron pair: forward cache is empty");
  }
  if (layer_index >= prev.layers.size() || layer_index >= next.layers.size()) {
    throw ShapeMismatch("kron pair: layer index out of range");
  }
  if (prev.batch != next.batch) {
    throw ShapeMismatch("kron pair: caches come from different sample sets");
  }
  const auto& lp = prev.layers[layer_index];
  const auto& ln = next.layers[layer_index];
  if (lp.s.empty() || ln.s.empty()) {
    throw EmptyCache("kron pair: layer cache is empty");
  }

  const auto mean_of = [](const std::vector<Matrix>& ms) {
    Matrix acc = Matrix::Zero(ms[0].rows(), ms[0].cols());
    for (const auto& m : ms) acc += m;
    return Matrix(acc / static_cast<double>(ms.size()));
  };
  const Matrix du = mean_of(ln.s) - mean_of(lp.s);
  const Matrix dv = mean_of(ln.g) - mean_of(lp.g);
  if (g_tilde.rows() != du.rows()) {
    throw ShapeMismatch("kron pair: G factor does not match pre-activations");
  }
  KronPair pair;
  pair.u = du;
  pair.v = dv - g_tilde * du;
  return pair;
}

}  // namespace s2qn::models
