#include "s2qn/curvature.hpp"

#include <algorithm>
#include <cmath>

#include "s2qn/rng.hpp"

namespace s2qn::curvature {

SampleSet draw_sample_set(std::uint64_t run_seed, long k, SampleSet::Kind kind,
                          Eigen::Index count, Eigen::Index n_total) {
  if (count < 1 || count > n_total) {
    throw ConfigError("sample draw: count must be in [1, N]");
  }
  SampleSet set;
  set.kind = kind;
  const auto purpose = kind == SampleSet::Kind::gradient
                           ? rng::Purpose::gradient_batch
                           : rng::Purpose::hessian_batch;
  set.draw_seed =
      rng::derive_seed(run_seed, static_cast<std::uint64_t>(k),
                       static_cast<std::uint64_t>(purpose));
  if (count == n_total) {
    set.indices.resize(static_cast<std::size_t>(n_total));
    for (Eigen::Index i = 0; i < n_total; ++i) {
      set.indices[static_cast<std::size_t>(i)] = i;
    }
    return set;
  }
  rng::Stream stream(set.draw_seed);
  auto drawn = stream.sample_without_replacement(
      static_cast<std::uint64_t>(n_total), static_cast<std::uint64_t>(count));
  set.indices.reserve(drawn.size());
  for (auto d : drawn) {
    set.indices.push_back(static_cast<Eigen::Index>(d));
  }
  std::sort(set.indices.begin(), set.indices.end());
  return set;
}

namespace {

// Ascending-index accumulation keeps every builder invariant to the order the
// batch was handed over in.
std::vector<Eigen::Index> sorted_copy(models::Batch batch) {
  std::vector<Eigen::Index> idx(batch.begin(), batch.end());
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

Matrix subsampled_hessian(const models::Problem& problem, const Vector& theta,
                          models::Batch batch) {
  if (batch.empty()) {
    throw DimensionMismatch("subsampled Hessian: empty batch");
  }
  const auto idx = sorted_copy(batch);
  Matrix h = Matrix::Zero(problem.dim(), problem.dim());
  for (const Eigen::Index i : idx) {
    h += problem.sample_hessian(theta, i);
  }
  h /= static_cast<double>(idx.size());
  return h;
}

Matrix ggn_matrix(const models::Problem& problem, const Vector& theta,
                  models::Batch batch) {
  if (batch.empty()) {
    throw DimensionMismatch("ggn: empty batch");
  }
  const auto idx = sorted_copy(batch);
  Matrix h = Matrix::Zero(problem.dim(), problem.dim());
  for (const Eigen::Index i : idx) {
    const Matrix f = problem.ggn_factor(theta, i);
    h.noalias() += f * f.transpose();
  }
  h /= static_cast<double>(idx.size());
  return h;
}

Matrix efim(const models::Problem& problem, const Vector& theta,
            models::Batch batch) {
  if (batch.empty()) {
    throw DimensionMismatch("efim: empty batch");
  }
  const auto idx = sorted_copy(batch);
  Matrix h = Matrix::Zero(problem.dim(), problem.dim());
  for (const Eigen::Index i : idx) {
    const Vector g = problem.sample_gradient(theta, i);
    h.noalias() += g * g.transpose();
  }
  h /= static_cast<double>(idx.size());
  return h;
}

linalg::LowRankFactor efim_lowrank(const models::Problem& problem,
                                   const Vector& theta, models::Batch batch) {
  if (batch.empty()) {
    throw DimensionMismatch("efim: empty batch");
  }
  const auto idx = sorted_copy(batch);
  Matrix q(problem.dim(), static_cast<Eigen::Index>(idx.size()));
  const double scale = 1.0 / std::sqrt(static_cast<double>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) {
    q.col(static_cast<Eigen::Index>(c)) =
        scale * problem.sample_gradient(theta, idx[c]);
  }
  return linalg::LowRankFactor{std::move(q)};
}

KronFactors kfac_factors_from_cache(const models::ForwardCache& cache,
                                    const models::LayerSpec& layer,
                                    std::size_t layer_index,
                                    bool spatial_average) {
  if (cache.empty() || layer_index >= cache.layers.size()) {
    throw LayerUnsupported("kfac factors: no capture for this layer");
  }
  const auto& lc = cache.layers[layer_index];
  if (lc.a.empty() || lc.g.empty()) {
    throw LayerUnsupported("kfac factors: layer capture is empty");
  }
  const Eigen::Index a_rows = layer.a_rows();
  const Eigen::Index g_rows = layer.g_rows();
  if (lc.a[0].rows() != a_rows || lc.g[0].rows() != g_rows) {
    throw ShapeMismatch("kfac factors: capture does not match the layer spec");
  }

  KronFactors out;
  out.a_hat = Matrix::Zero(a_rows, a_rows);
  out.g_tilde = Matrix::Zero(g_rows, g_rows);
  for (std::size_t i = 0; i < lc.a.size(); ++i) {
    out.a_hat.noalias() += lc.a[i] * lc.a[i].transpose();
    out.g_tilde.noalias() += lc.g[i] * lc.g[i].transpose();
  }
  out.a_hat /= static_cast<double>(lc.a.size());
  out.g_tilde /= static_cast<double>(lc.g.size());
  if (spatial_average && layer.kind == models::LayerSpec::Kind::conv) {
    out.a_hat /= static_cast<double>(layer.spatial());
  }
  return out;
}

KronFactors kfac_empirical_factors(const models::LayeredProblem& problem,
                                   const Vector& theta, models::Batch batch,
                                   std::size_t layer_index,
                                   bool spatial_average) {
  if (layer_index >= problem.layers().size()) {
    throw LayerUnsupported("kfac factors: layer index out of range");
  }
  const models::ForwardCache cache = problem.forward_backward(theta, batch);
  return kfac_factors_from_cache(cache, problem.layers()[layer_index],
                                 layer_index, spatial_average);
}

}  // namespace s2qn::curvature
