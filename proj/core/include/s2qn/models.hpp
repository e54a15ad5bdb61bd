#ifndef S2QN_MODELS_HPP
#define S2QN_MODELS_HPP

#include <span>
#include <string>
#include <vector>

#include "s2qn/dataio.hpp"
#include "s2qn/linalg.hpp"

namespace s2qn::models {

using s2qn::Matrix;
using s2qn::Vector;

using Batch = std::span<const Eigen::Index>;

// Training objective with exact derivatives. Loss and gradient are means over
// the batch; any l2 term lives inside the per-sample loss, so the mean carries
// it exactly once.
class Problem {
public:
  virtual ~Problem() = default;

  virtual Eigen::Index dim() const = 0;
  virtual Eigen::Index sample_count() const = 0;

  virtual double loss(const Vector& theta, Batch batch) const = 0;
  virtual Vector gradient(const Vector& theta, Batch batch) const = 0;
  virtual Vector sample_gradient(const Vector& theta, Eigen::Index i) const = 0;

  // Exact per-sample Hessian; only models with cheap second derivatives
  // provide it (logistic regression). Everything else refuses.
  virtual Matrix sample_hessian(const Vector& theta, Eigen::Index i) const;

  // Columns F with F F^T the sample's Gauss-Newton term (pure data part; the
  // caller folds any l2 shift).
  virtual Matrix ggn_factor(const Vector& theta, Eigen::Index i) const = 0;

  // J w with J = d(model output)/d(theta), dim() x m. Cotangent w lives in
  // output space.
  virtual Vector jacobian_vjp(const Vector& theta, Eigen::Index i,
                              const Vector& w) const = 0;
  // d(loss)/d(output) at sample i, length m.
  virtual Vector output_loss_gradient(const Vector& theta,
                                      Eigen::Index i) const = 0;
  virtual Eigen::Index output_dim() const = 0;

  virtual double l2_coefficient() const { return 0.0; }

  double full_loss(const Vector& theta) const;
  Vector full_gradient(const Vector& theta) const;
};

// l2-regularized binary logistic regression on {-1,+1} labels.
// Per-sample loss: log(1 + exp(-y <x, theta>)) + mu ||theta||^2.
class LogisticRegressionProblem : public Problem {
public:
  LogisticRegressionProblem(dataio::Dataset data, double mu);

  Eigen::Index dim() const override { return data_.n_features; }
  Eigen::Index sample_count() const override { return data_.size(); }
  double loss(const Vector& theta, Batch batch) const override;
  Vector gradient(const Vector& theta, Batch batch) const override;
  Vector sample_gradient(const Vector& theta, Eigen::Index i) const override;
  Matrix sample_hessian(const Vector& theta, Eigen::Index i) const override;
  Matrix ggn_factor(const Vector& theta, Eigen::Index i) const override;
  Vector jacobian_vjp(const Vector& theta, Eigen::Index i,
                      const Vector& w) const override;
  Vector output_loss_gradient(const Vector& theta,
                              Eigen::Index i) const override;
  Eigen::Index output_dim() const override { return 1; }
  double l2_coefficient() const override { return mu_; }

  // (1/|S|) sum sigma'(y_i z_i) x_i x_i^T + 2 mu I, the exact mean Hessian.
  Matrix exact_hessian(const Vector& theta, Batch batch) const;

  const dataio::Dataset& data() const { return data_; }

private:
  dataio::Dataset data_;
  double mu_;
};

enum class Activation { sigmoid, relu };
enum class LossKind { square, sigmoid_ce };

Activation activation_from_string(const std::string& s);
LossKind loss_from_string(const std::string& s);

// One trainable layer of a layered net. Dense layers append a homogeneous 1
// to their input, so the weight is out_dim x (in_dim + 1) and there is no
// separate bias vector. Conv layers have no bias; kernel window is
// (2*radius+1)^2, padding = radius, stride 1, so the grid size is preserved.
struct LayerSpec {
  enum class Kind { dense, conv };
  Kind kind = Kind::dense;

  int in_dim = 0;   // dense fan-in (without the appended 1)
  int out_dim = 0;  // dense fan-out

  int in_channels = 0;
  int out_channels = 0;
  int radius = 0;
  int height = 0;
  int width = 0;

  Eigen::Index offset = 0;  // start of this layer's slice of theta

  int window() const { return (2 * radius + 1) * (2 * radius + 1); }
  // Rows of the activation factor: dense in_dim+1, conv in_channels*window.
  int a_rows() const;
  // Rows of the pre-activation factor: dense out_dim, conv out_channels.
  int g_rows() const;
  int spatial() const { return kind == Kind::dense ? 1 : height * width; }
  Eigen::Index param_count() const {
    return static_cast<Eigen::Index>(g_rows()) * a_rows();
  }
};

// Per-batch capture of the factor matrices each layer produces:
// a[i] (a_rows x spatial) input activations, s[i] and g[i] (g_rows x spatial)
// pre-activations and their loss gradients, one entry per batch sample.
// Weight gradient of sample i on layer l is g[i] * a[i]^T.
struct LayerCache {
  std::vector<Matrix> a;
  std::vector<Matrix> s;
  std::vector<Matrix> g;
};

struct ForwardCache {
  double loss = 0.0;
  Vector gradient;                    // mean over the batch
  std::vector<LayerCache> layers;
  std::vector<Eigen::Index> batch;    // sample indices the cache was built on

  bool empty() const { return batch.empty(); }
};

// Layered nets expose their layer map plus a capturing forward/backward pass;
// the Kronecker-factored paths are built on this.
class LayeredProblem : public Problem {
public:
  virtual const std::vector<LayerSpec>& layers() const = 0;
  virtual ForwardCache forward_backward(const Vector& theta,
                                        Batch batch) const = 0;
};

// Fully-connected net: dims[0] inputs, dims.back() outputs, hidden activation
// applied between layers, model output is the last pre-activation.
class MlpProblem : public LayeredProblem {
public:
  MlpProblem(Matrix inputs, Matrix targets, std::vector<int> dims,
             Activation act, LossKind loss_kind);

  Eigen::Index dim() const override { return dim_; }
  Eigen::Index sample_count() const override { return inputs_.rows(); }
  double loss(const Vector& theta, Batch batch) const override;
  Vector gradient(const Vector& theta, Batch batch) const override;
  Vector sample_gradient(const Vector& theta, Eigen::Index i) const override;
  Matrix ggn_factor(const Vector& theta, Eigen::Index i) const override;
  Vector jacobian_vjp(const Vector& theta, Eigen::Index i,
                      const Vector& w) const override;
  Vector output_loss_gradient(const Vector& theta,
                              Eigen::Index i) const override;
  Eigen::Index output_dim() const override { return dims_.back(); }

  const std::vector<LayerSpec>& layers() const override { return layers_; }
  ForwardCache forward_backward(const Vector& theta, Batch batch) const override;

private:
  Matrix inputs_;   // N x dims[0]
  Matrix targets_;  // N x dims.back()
  std::vector<int> dims_;
  Activation act_;
  LossKind loss_kind_;
  std::vector<LayerSpec> layers_;
  Eigen::Index dim_ = 0;
};

// Single convolutional layer as a standalone problem: output is the
// pre-activation grid, loss applied elementwise against a same-shape target.
class ConvProblem : public LayeredProblem {
public:
  ConvProblem(Matrix inputs, Matrix targets, int in_channels, int out_channels,
              int radius, int height, int width, LossKind loss_kind);

  Eigen::Index dim() const override { return layer_.param_count(); }
  Eigen::Index sample_count() const override { return inputs_.rows(); }
  double loss(const Vector& theta, Batch batch) const override;
  Vector gradient(const Vector& theta, Batch batch) const override;
  Vector sample_gradient(const Vector& theta, Eigen::Index i) const override;
  Matrix ggn_factor(const Vector& theta, Eigen::Index i) const override;
  Vector jacobian_vjp(const Vector& theta, Eigen::Index i,
                      const Vector& w) const override;
  Vector output_loss_gradient(const Vector& theta,
                              Eigen::Index i) const override;
  Eigen::Index output_dim() const override {
    return static_cast<Eigen::Index>(layer_.out_channels) * layer_.spatial();
  }

  const std::vector<LayerSpec>& layers() const override { return layers_; }
  ForwardCache forward_backward(const Vector& theta, Batch batch) const override;

  // Patch matrix: rows indexed j*window + delta, columns by location; entries
  // a_{j, t+delta} with zeros outside the padded grid.
  Matrix im2col(const Vector& image) const;

private:
  Matrix inputs_;   // N x (in_channels*height*width)
  Matrix targets_;  // N x (out_channels*height*width)
  LayerSpec layer_;
  std::vector<LayerSpec> layers_;
  LossKind loss_kind_;
};

struct KronPair {
  Matrix u;
  Matrix v;
};

// Layer-local block pair from the parameter-space pair (u, v_hat): with
// U_hat = mat(u_layer) the refinement target Lam * (U_hat A) = V_hat - G U_hat A
// lifts back to (A (x) (G + Lam)) u = v_hat exactly.
KronPair extract_pair_b1(const LayerSpec& layer, const Vector& u_full,
                         const Vector& v_hat_full, const Matrix& a_hat,
                         const Matrix& g_tilde);

// Pre-activation pair: batch-averaged s and ds differences per spatial
// location, v-side corrected by the current G factor.
KronPair extract_pair_b2(std::size_t layer_index, const ForwardCache& prev,
                         const ForwardCache& next, const Matrix& g_tilde);

// v = (1/|S|) sum_i (J_i(next) - J_i(prev)) dl_i(next); the refinement target
// for the Gauss-Newton local-convergence mode. Constant-Jacobian models give 0.
Vector structured_pair_v(const Problem& problem, const Vector& theta_prev,
                         const Vector& theta_next, Batch batch);

}  // namespace s2qn::models

#endif  // S2QN_MODELS_HPP
