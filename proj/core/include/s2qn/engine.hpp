#ifndef S2QN_ENGINE_HPP
#define S2QN_ENGINE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "s2qn/curvature.hpp"
#include "s2qn/linalg.hpp"
#include "s2qn/models.hpp"
#include "s2qn/refinement.hpp"
#include "s2qn/schedule.hpp"
#include "s2qn/solver.hpp"

namespace s2qn::engine {

using s2qn::Matrix;
using s2qn::Vector;

// sgd_baseline  d = -alpha_k g                     (no curvature at all)
// ssn           d = -(H + lambda I)^{-1} g         (base only, no refinement)
// s4qn          d = -(H + Lam + lambda I)^{-1} g   (base + compact refinement)
// skqn_l        per-layer Kronecker base + per-layer compact refinement
// skqn_b1/b2    per-layer Kronecker base + block refinement on the small
//               factor; b1 extracts pairs from the parameter step, b2 from
//               pre-activation statistics.
enum class Method { sgd_baseline, ssn, s4qn, skqn_l, skqn_b1, skqn_b2 };

enum class BaseKind { hessian, ggn, efim, efim_lowrank, kfac };

// standard: v_hat = same-sample gradient difference, v = v_hat - H u at
// consumption. structured: v is the Jacobian-difference target, used as-is.
enum class PairMode { standard, structured };

// What the loss column of the metrics table reports.
enum class LossMetric { full, batch };

Method method_from_string(const std::string& s);
BaseKind base_from_string(const std::string& s);
PairMode pair_mode_from_string(const std::string& s);
LossMetric loss_metric_from_string(const std::string& s);
std::string to_string(Method m);
std::string to_string(BaseKind b);
std::string to_string(PairMode p);
std::string to_string(LossMetric m);

struct RunConfig {
  Method method = Method::s4qn;
  BaseKind base = BaseKind::hessian;
  PairMode pair_mode = PairMode::standard;

  schedule::AlphaRule alpha{};
  double beta = 1.0;

  // Regularizer thresholds; lambda_k multiplies 1/alpha_k by a factor in
  // (0,2) driven by the previous mini-batch gradient norm.
  double r1 = 1e-3;
  double r2 = 1.0;

  // Clamp alpha_k to the almost-sure-convergence bound r1/(4 r2 (L+h)).
  bool theory_mode = false;
  double l_psi_estimate = 1.0;
  double h_estimate = 1.0;

  schedule::BatchRule gradient_batch{};
  schedule::BatchRule hessian_batch{};

  int memory = 5;
  double epsilon_b = 1e-8;
  bool damping = true;
  // Recompute every buffered residual v = v_hat - H u against the current
  // base at consumption time (and evict pairs that stop passing), instead of
  // only the newest one.
  bool strict_pair_refresh = false;
  refinement::PChoice p_choice = refinement::PChoice::symmetric;
  refinement::SketchConfig sketch{};

  solver::KronMode kron_mode = solver::KronMode::exact;
  bool kfac_spatial_average = true;

  std::uint64_t seed = 1;

  double max_epochs = 10.0;
  long max_iterations = -1;   // < 0: no iteration cap
  double max_wall_ms = 0.0;   // wall-clock budget; <= 0 disables
  double tol = 0.0;           // full-gradient stop; 0 disables
  // Full-gradient probes fire when the epoch counter crosses multiples of
  // this; <= 0 probes every iteration. Probes are not charged to the epoch
  // budget.
  double probe_interval = 1.0;

  // Local-convergence study: full gradient batch, lambda pinned to 1e-12
  // (failure doubling still applies), beta = 1.
  bool local_mode = false;

  bool record_timing = false;    // ms column stays 0 when off, for replay
  bool relerr_enabled = false;   // adds a reference solve and relerr column
  bool record_iterates = false;  // keep the whole iterate trajectory
  LossMetric loss_metric = LossMetric::full;

  Vector theta0;            // empty: zeros, or gaussian when init_scale > 0
  double init_scale = 0.0;
};

// One metrics row, written after the step of iteration k. loss/fullgnorm/
// relerr are evaluated at the post-step iterate; gnorm is the mini-batch
// gradient the step was computed from. Unprobed fields hold NaN.
struct IterationRow {
  long k = 0;
  double epoch = 0.0;
  double loss = 0.0;
  double gnorm = 0.0;
  double fullgnorm = 0.0;
  double relerr = 0.0;
  double lambda = 0.0;
  long sg = 0;
  long sh = 0;
  int pair = 0;
  double ms = 0.0;
};

std::string csv_header();

struct RunRecord {
  std::vector<IterationRow> rows;
  Vector theta_final;
  std::vector<Vector> iterates;  // theta_0..theta_final when recorded
  double epochs = 0.0;
  long iterations = 0;
  std::string stop_reason;
  double psi_star = 0.0;  // reference optimum value when relerr is enabled

  std::string to_csv() const;
};

struct Reference {
  Vector theta_star;
  double psi_star = 0.0;
};

// Damped Newton on the full objective from zero, to ||grad|| <= 1e-12.
// Deterministic; needs exact per-sample Hessians. Throws NotConverged.
Reference compute_reference_optimum(const models::Problem& problem);

// Throws ConfigError on inconsistent settings (thresholds, method/base
// pairing, structured pairs outside s4qn, skqn on a non-layered model, ...).
void validate_config(const RunConfig& cfg, const models::Problem& problem);

RunRecord run(const RunConfig& cfg, const models::Problem& problem);

}  // namespace s2qn::engine

#endif  // S2QN_ENGINE_HPP
