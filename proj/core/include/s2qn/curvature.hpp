#ifndef S2QN_CURVATURE_HPP
#define S2QN_CURVATURE_HPP

#include <cstdint>
#include <vector>

#include "s2qn/linalg.hpp"
#include "s2qn/models.hpp"

namespace s2qn::curvature {

using s2qn::Matrix;
using s2qn::Vector;

// A without-replacement draw of dataset rows for one iteration. Indices are
// kept sorted so that accumulation order never depends on the draw order.
struct SampleSet {
  enum class Kind { gradient, hessian };

  std::vector<Eigen::Index> indices;
  Kind kind = Kind::gradient;
  std::uint64_t draw_seed = 0;

  models::Batch span() const { return models::Batch(indices); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(indices.size()); }
};

// The draw is a pure function of (run_seed, k, kind): batch contents can never
// leak information from observed losses or buffer state back into sampling.
SampleSet draw_sample_set(std::uint64_t run_seed, long k, SampleSet::Kind kind,
                          Eigen::Index count, Eigen::Index n_total);

// (1/|S|) sum of exact per-sample Hessians. UnsupportedModel propagates from
// models without cheap second derivatives.
Matrix subsampled_hessian(const models::Problem& problem, const Vector& theta,
                          models::Batch batch);

// (1/|S|) sum of per-sample Gauss-Newton terms, data part only; symmetric PSD
// for convex losses. Callers fold any l2 shift themselves.
Matrix ggn_matrix(const models::Problem& problem, const Vector& theta,
                  models::Batch batch);

// (1/|S|) sum of per-sample gradient outer products.
Matrix efim(const models::Problem& problem, const Vector& theta,
            models::Batch batch);

// Columns grad_i / sqrt(|S|), so Q Q^T equals the dense efim exactly.
linalg::LowRankFactor efim_lowrank(const models::Problem& problem,
                                   const Vector& theta, models::Batch batch);

struct KronFactors {
  Matrix a_hat;    // activation second moment, a_rows x a_rows
  Matrix g_tilde;  // pre-activation-gradient second moment, g_rows x g_rows
};

// Empirical Kronecker factors of one layer from a captured batch pass.
// spatial_average divides the activation factor by the grid size (conv only);
// with it off the per-location contributions are summed.
KronFactors kfac_factors_from_cache(const models::ForwardCache& cache,
                                    const models::LayerSpec& layer,
                                    std::size_t layer_index,
                                    bool spatial_average = true);

// Convenience wrapper running the capturing pass itself.
KronFactors kfac_empirical_factors(const models::LayeredProblem& problem,
                                   const Vector& theta, models::Batch batch,
                                   std::size_t layer_index,
                                   bool spatial_average = true);

}  // namespace s2qn::curvature

#endif  // S2QN_CURVATURE_HPP
