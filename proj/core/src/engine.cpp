#include "s2qn/engine.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>

#include "s2qn/errors.hpp"
#include "s2qn/rng.hpp"

namespace s2qn::engine {

namespace {

constexpr int kMaxLambdaDoublings = 40;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::vector<Eigen::Index> all_indices(Eigen::Index n) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return idx;
}

void append_number(std::string& out, double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  out.append(buf, res.ptr);
}

void append_number(std::string& out, long x) {
  out.append(std::to_string(x));
}

// Quasi-Newton window plus the scaling of its newest accepted pair. Until the
// first acceptance the refinement is absent entirely (Lam = 0), not gamma I.
struct QnState {
  refinement::PairBuffer buffer;
  double gamma = 1.0;
  bool live = false;

  refinement::CompactLbfgs compact(Eigen::Index dim) const {
    if (!live) return refinement::CompactLbfgs(0.0, dim);
    return refinement::build_compact(buffer, gamma, dim);
  }

  Vector apply_refinement(const Vector& x) const {
    if (!live) return Vector::Zero(x.size());
    if (buffer.empty()) return gamma * x;
    return refinement::build_compact(buffer, gamma, x.size()).apply(x);
  }
};

struct BlockState {
  Matrix lambda;
  bool initialized = false;
};

bool same_indices(const std::vector<Eigen::Index>& a,
                  const std::vector<Eigen::Index>& b) {
  return a == b;
}

// Feeds one (possibly multi-column) pair into a block refinement, pruning
// dependent columns once if the Gram matrix degenerates. Returns whether the
// block actually changed.
bool feed_block_pair(BlockState& state, const models::KronPair& kp,
                     const RunConfig& cfg, std::uint64_t sketch_seed) {
  if (kp.u.size() == 0 || kp.u.norm() == 0.0) return false;
  if (!state.initialized) {
    const double uv = (kp.u.array() * kp.v.array()).sum();
    const double vv = kp.v.squaredNorm();
    const double g0 =
        uv > 0.0 ? std::clamp(vv / uv, 1e-4, 1e4) : 1.0;
    state.lambda =
        g0 * Matrix::Identity(kp.u.rows(), kp.u.rows());
    state.initialized = true;
  }
  const auto update = [&](const Matrix& u, const Matrix& v) {
    return refinement::sketchy_block_bfgs_update(state.lambda, u, v, cfg.sketch,
                                                 cfg.p_choice, sketch_seed);
  };
  refinement::BlockUpdateResult res;
  try {
    res = update(kp.u, kp.v);
  } catch (const RankDeficientU&) {
    const auto cols = refinement::independent_columns(state.lambda, kp.u);
    if (cols.empty()) return false;
    Matrix u2(kp.u.rows(), static_cast<Eigen::Index>(cols.size()));
    Matrix v2(kp.v.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) {
      u2.col(static_cast<Eigen::Index>(i)) = kp.u.col(cols[i]);
      v2.col(static_cast<Eigen::Index>(i)) = kp.v.col(cols[i]);
    }
    try {
      res = update(u2, v2);
    } catch (const RankDeficientU&) {
      return false;
    }
  }
  if (res.updated) state.lambda = res.lambda;
  return res.updated;
}

}  // namespace

Method method_from_string(const std::string& s) {
  if (s == "sgd-baseline") return Method::sgd_baseline;
  if (s == "ssn") return Method::ssn;
  if (s == "s4qn") return Method::s4qn;
  if (s == "skqn-l") return Method::skqn_l;
  if (s == "skqn-b1") return Method::skqn_b1;
  if (s == "skqn-b2") return Method::skqn_b2;
  throw ConfigError("unknown method '" + s +
                    "' (expected sgd-baseline, ssn, s4qn, skqn-l, skqn-b1 or "
                    "skqn-b2)");
}

BaseKind base_from_string(const std::string& s) {
  if (s == "hessian") return BaseKind::hessian;
  if (s == "ggn") return BaseKind::ggn;
  if (s == "efim") return BaseKind::efim;
  if (s == "efim-lowrank") return BaseKind::efim_lowrank;
  if (s == "kfac") return BaseKind::kfac;
  throw ConfigError("unknown base '" + s +
                    "' (expected hessian, ggn, efim, efim-lowrank or kfac)");
}

PairMode pair_mode_from_string(const std::string& s) {
  if (s == "standard") return PairMode::standard;
  if (s == "structured") return PairMode::structured;
  throw ConfigError("unknown pair mode '" + s +
                    "' (expected standard or structured)");
}

LossMetric loss_metric_from_string(const std::string& s) {
  if (s == "full") return LossMetric::full;
  if (s == "batch") return LossMetric::batch;
  throw ConfigError("unknown loss metric '" + s + "' (expected full or batch)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::sgd_baseline: return "sgd-baseline";
    case Method::ssn: return "ssn";
    case Method::s4qn: return "s4qn";
    case Method::skqn_l: return "skqn-l";
    case Method::skqn_b1: return "skqn-b1";
    case Method::skqn_b2: return "skqn-b2";
  }
  return "?";
}

std::string to_string(BaseKind b) {
  switch (b) {
    case BaseKind::hessian: return "hessian";
    case BaseKind::ggn: return "ggn";
    case BaseKind::efim: return "efim";
    case BaseKind::efim_lowrank: return "efim-lowrank";
    case BaseKind::kfac: return "kfac";
  }
  return "?";
}

std::string to_string(PairMode p) {
  return p == PairMode::standard ? "standard" : "structured";
}

std::string to_string(LossMetric m) {
  return m == LossMetric::full ? "full" : "batch";
}

std::string csv_header() {
  return "k,epoch,loss,gnorm,fullgnorm,relerr,lambda,sg,sh,pair,ms";
}

std::string RunRecord::to_csv() const {
  std::string out = csv_header();
  out += '\n';
  for (const auto& r : rows) {
    append_number(out, r.k);
    out += ',';
    append_number(out, r.epoch);
    out += ',';
    append_number(out, r.loss);
    out += ',';
    append_number(out, r.gnorm);
    out += ',';
    append_number(out, r.fullgnorm);
    out += ',';
    append_number(out, r.relerr);
    out += ',';
    append_number(out, r.lambda);
    out += ',';
    append_number(out, r.sg);
    out += ',';
    append_number(out, r.sh);
    out += ',';
    append_number(out, static_cast<long>(r.pair));
    out += ',';
    append_number(out, r.ms);
    out += '\n';
  }
  return out;
}

Reference compute_reference_optimum(const models::Problem& problem) {
  const Eigen::Index n = problem.dim();
  const auto all = all_indices(problem.sample_count());
  const models::Batch batch(all);
  const auto* lr =
      dynamic_cast<const models::LogisticRegressionProblem*>(&problem);

  Vector theta = Vector::Zero(n);
  for (int it = 0; it < 200; ++it) {
    const Vector g = problem.gradient(theta, batch);
    if (g.norm() <= 1e-12) {
      return {theta, problem.loss(theta, batch)};
    }
    Matrix h = lr ? lr->exact_hessian(theta, batch)
                  : curvature::subsampled_hessian(problem, theta, batch);
    Vector d;
    double ridge = 0.0;
    for (;;) {
      try {
        Matrix shifted = h;
        if (ridge > 0.0) shifted.diagonal().array() += ridge;
        linalg::SymCholesky chol(shifted);
        d = -chol.solve(g);
        break;
      } catch (const NotPositiveDefinite&) {
        ridge = ridge == 0.0 ? 1e-10 : ridge * 100.0;
        if (ridge > 1e8) {
          throw NotConverged("reference solve: curvature is not usable");
        }
      }
    }
    const double f0 = problem.loss(theta, batch);
    const double slope = g.dot(d);
    double t = 1.0;
    while (t >= 1e-13 &&
           !(problem.loss(theta + t * d, batch) <= f0 + 1e-4 * t * slope)) {
      t *= 0.5;
    }
    if (t < 1e-13) {
      throw NotConverged("reference solve: line search failed");
    }
    theta += t * d;
  }
  throw NotConverged(
      "reference solve: gradient tolerance not reached in 200 iterations");
}

void validate_config(const RunConfig& cfg, const models::Problem& problem) {
  schedule::validate_thresholds(cfg.r1, cfg.r2);
  if (!(cfg.alpha.alpha0 > 0.0)) throw ConfigError("alpha0 must be positive");
  if (cfg.alpha.exponent < 0.0) {
    throw ConfigError("alpha exponent must be nonnegative");
  }
  if (!(cfg.beta > 0.0)) throw ConfigError("beta must be positive");
  if (cfg.memory < 1) throw ConfigError("memory must be at least 1");
  if (cfg.epsilon_b < 0.0) throw ConfigError("epsilon_b must be nonnegative");
  if (cfg.max_epochs < 0.0) throw ConfigError("max_epochs must be nonnegative");
  if (cfg.tol < 0.0) throw ConfigError("tol must be nonnegative");
  if (cfg.sketch.dim < 0) throw ConfigError("sketch dim must be nonnegative");
  if (cfg.init_scale < 0.0) throw ConfigError("init_scale must be nonnegative");
  if (cfg.theory_mode &&
      (!(cfg.l_psi_estimate >= 1.0) || !(cfg.h_estimate >= 0.0))) {
    throw ConfigError("theory mode needs smoothness estimate >= 1 and "
                      "nonnegative curvature bound");
  }
  for (const auto* rule : {&cfg.gradient_batch, &cfg.hessian_batch}) {
    if (rule->s0 < 1) throw ConfigError("batch size must be at least 1");
    if (rule->kind != schedule::BatchKind::constant && rule->rho < 1.0) {
      throw ConfigError("batch growth factor must be at least 1");
    }
  }
  if (cfg.theta0.size() > 0 && cfg.theta0.size() != problem.dim()) {
    throw ConfigError("theta0 length does not match the parameter count");
  }

  const bool layered =
      dynamic_cast<const models::LayeredProblem*>(&problem) != nullptr;
  const bool kron_method = cfg.method == Method::skqn_l ||
                           cfg.method == Method::skqn_b1 ||
                           cfg.method == Method::skqn_b2;
  if (kron_method) {
    if (cfg.base != BaseKind::kfac) {
      throw ConfigError("skqn methods require base=kfac");
    }
    if (!layered) {
      throw ConfigError("skqn methods need a layered model");
    }
  } else if (cfg.method != Method::sgd_baseline &&
             cfg.base == BaseKind::kfac) {
    throw ConfigError("base=kfac is only valid with skqn methods");
  }
  if (cfg.pair_mode == PairMode::structured && cfg.method != Method::s4qn) {
    throw ConfigError("structured pairs are only meaningful for s4qn");
  }
}

RunRecord run(const RunConfig& cfg, const models::Problem& problem) {
  validate_config(cfg, problem);

  const Eigen::Index n = problem.dim();
  const Eigen::Index data_n = problem.sample_count();
  const auto* layered = dynamic_cast<const models::LayeredProblem*>(&problem);
  const bool needs_base = cfg.method != Method::sgd_baseline;
  // Only paths that form same-sample gradient differences pay for the
  // end-of-iteration re-evaluation (and can therefore reuse it next time).
  const bool standard_pairs =
      (cfg.method == Method::s4qn && cfg.pair_mode == PairMode::standard) ||
      cfg.method == Method::skqn_l || cfg.method == Method::skqn_b1;

  RunRecord rec;
  rec.psi_star = kNan;
  if (cfg.relerr_enabled) {
    rec.psi_star = compute_reference_optimum(problem).psi_star;
  }

  Vector theta;
  if (cfg.theta0.size() > 0) {
    theta = cfg.theta0;
  } else if (cfg.init_scale > 0.0) {
    rng::Stream init(rng::derive_seed(
        cfg.seed, 0, static_cast<std::uint64_t>(rng::Purpose::init)));
    theta = Vector(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      theta(i) = cfg.init_scale * init.next_gaussian();
    }
  } else {
    theta = Vector::Zero(n);
  }
  if (cfg.record_iterates) rec.iterates.push_back(theta);

  // Vector-path refinement and its pending pair.
  QnState qn;
  qn.buffer.capacity = cfg.memory;
  qn.buffer.epsilon_b = cfg.epsilon_b;
  qn.buffer.powell_damping = cfg.damping;
  bool have_candidate = false;
  refinement::CurvaturePair candidate;

  // Per-layer state for the Kronecker paths.
  const std::size_t n_layers = layered ? layered->layers().size() : 0;
  std::vector<QnState> layer_qn(n_layers);
  for (auto& lq : layer_qn) {
    lq.buffer.capacity = cfg.memory;
    lq.buffer.epsilon_b = cfg.epsilon_b;
    lq.buffer.powell_damping = cfg.damping;
  }
  std::vector<BlockState> layer_blocks(n_layers);
  models::ForwardCache cand_prev;
  models::ForwardCache cand_next;
  bool have_cache_pair = false;

  // End-of-iteration gradient kept for reuse when the next draw repeats.
  std::vector<Eigen::Index> cached_batch;
  Vector cached_grad;
  bool have_cached_grad = false;

  std::optional<double> prev_gnorm;
  double epochs = 0.0;
  double next_probe = 0.0;
  long k = 0;
  std::string stop;

  const double alpha_cap =
      cfg.theory_mode
          ? schedule::theory_alpha_bound(cfg.l_psi_estimate, cfg.h_estimate,
                                         cfg.r1, cfg.r2)
          : std::numeric_limits<double>::infinity();

  const auto run_start = std::chrono::steady_clock::now();
  for (;;) {
    if (cfg.max_iterations >= 0 && k >= cfg.max_iterations) {
      stop = "max-iterations";
      break;
    }
    if (epochs >= cfg.max_epochs) {
      stop = "max-epochs";
      break;
    }
    if (cfg.max_wall_ms > 0.0 &&
        std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - run_start)
                .count() >= cfg.max_wall_ms) {
      stop = "wall-clock";
      break;
    }
    const auto t_start = std::chrono::steady_clock::now();
    double cost = 0.0;  // per-sample gradient-work equivalents this iteration

    const Eigen::Index sg_count =
        cfg.local_mode
            ? data_n
            : schedule::batch_size(cfg.gradient_batch, k, data_n);
    auto sg = curvature::draw_sample_set(
        cfg.seed, k, curvature::SampleSet::Kind::gradient, sg_count, data_n);
    curvature::SampleSet sh;
    if (needs_base) {
      const Eigen::Index sh_count =
          schedule::batch_size(cfg.hessian_batch, k, data_n);
      sh = curvature::draw_sample_set(
          cfg.seed, k, curvature::SampleSet::Kind::hessian, sh_count, data_n);
    }

    Vector g;
    if (have_cached_grad && same_indices(cached_batch, sg.indices)) {
      g = cached_grad;
    } else {
      g = problem.gradient(theta, sg.span());
      cost += static_cast<double>(sg.size());
    }
    have_cached_grad = false;
    if (!linalg::all_finite(g)) {
      throw NonFiniteLoss("mini-batch gradient is not finite");
    }
    const double gnorm = g.norm();

    // Base curvature for this iteration.
    Matrix hbase;
    linalg::LowRankFactor qbase;
    std::vector<curvature::KronFactors> factors;
    models::ForwardCache capture;
    if (needs_base) {
      switch (cfg.base) {
        case BaseKind::hessian:
          hbase = curvature::subsampled_hessian(problem, theta, sh.span());
          break;
        case BaseKind::ggn:
          hbase = curvature::ggn_matrix(problem, theta, sh.span());
          hbase.diagonal().array() += 2.0 * problem.l2_coefficient();
          break;
        case BaseKind::efim:
          hbase = curvature::efim(problem, theta, sh.span());
          break;
        case BaseKind::efim_lowrank:
          qbase = curvature::efim_lowrank(problem, theta, sh.span());
          break;
        case BaseKind::kfac: {
          capture = layered->forward_backward(theta, sh.span());
          factors.reserve(n_layers);
          for (std::size_t l = 0; l < n_layers; ++l) {
            factors.push_back(curvature::kfac_factors_from_cache(
                capture, layered->layers()[l], l, cfg.kfac_spatial_average));
          }
          break;
        }
      }
      cost += static_cast<double>(sh.size());
    }

    const auto base_apply = [&](const Vector& x) -> Vector {
      if (cfg.base == BaseKind::efim_lowrank) return qbase.apply(x);
      return hbase * x;
    };

    // Consume the pair formed at the previous step, now that the residual can
    // be taken against the current base.
    int pair_flag = 0;
    if (cfg.method == Method::s4qn) {
      if (cfg.strict_pair_refresh && !qn.buffer.empty()) {
        std::deque<refinement::CurvaturePair> kept;
        for (auto& pr : qn.buffer.pairs) {
          if (!pr.has_raw_difference()) {
            kept.push_back(std::move(pr));
            continue;
          }
          Vector v = pr.v_hat - base_apply(pr.u);
          const double uv = pr.u.dot(v);
          if (uv > 0.0 && uv >= qn.buffer.epsilon_b * pr.u.norm() * v.norm()) {
            pr.v = std::move(v);
            kept.push_back(std::move(pr));
          }
        }
        qn.buffer.pairs = std::move(kept);
      }
      if (have_candidate) {
        refinement::CurvaturePair pair = std::move(candidate);
        have_candidate = false;
        if (pair.has_raw_difference()) {
          pair.v = pair.v_hat - base_apply(pair.u);
        }
        const auto outcome = refinement::accept_pair(
            pair, qn.buffer,
            [&](const Vector& x) { return qn.apply_refinement(x); });
        if (outcome != refinement::AcceptOutcome::rejected) {
          qn.gamma = refinement::gamma_from_pair(pair);
          qn.buffer.push(std::move(pair));
          qn.live = true;
          pair_flag = 1;
        }
      }
    } else if (cfg.method == Method::skqn_l) {
      if (have_candidate) {
        for (std::size_t l = 0; l < n_layers; ++l) {
          const auto& spec = layered->layers()[l];
          const Eigen::Index off = spec.offset;
          const Eigen::Index len = spec.param_count();
          refinement::CurvaturePair pl;
          pl.u = candidate.u.segment(off, len);
          if (pl.u.norm() == 0.0) continue;
          pl.v_hat = candidate.v_hat.segment(off, len);
          pl.v = pl.v_hat - linalg::kron_apply(factors[l].a_hat,
                                               factors[l].g_tilde, pl.u);
          auto& lq = layer_qn[l];
          const auto outcome = refinement::accept_pair(
              pl, lq.buffer,
              [&](const Vector& x) { return lq.apply_refinement(x); });
          if (outcome != refinement::AcceptOutcome::rejected) {
            lq.gamma = refinement::gamma_from_pair(pl);
            lq.buffer.push(std::move(pl));
            lq.live = true;
            pair_flag = 1;
          }
        }
        have_candidate = false;
      }
    } else if (cfg.method == Method::skqn_b1) {
      if (have_candidate) {
        for (std::size_t l = 0; l < n_layers; ++l) {
          const auto kp = models::extract_pair_b1(
              layered->layers()[l], candidate.u, candidate.v_hat,
              factors[l].a_hat, factors[l].g_tilde);
          const auto seed = rng::derive_seed(
              cfg.seed, static_cast<std::uint64_t>(k),
              static_cast<std::uint64_t>(rng::Purpose::sketch), l);
          if (feed_block_pair(layer_blocks[l], kp, cfg, seed)) pair_flag = 1;
        }
        have_candidate = false;
      }
    } else if (cfg.method == Method::skqn_b2) {
      if (have_cache_pair) {
        for (std::size_t l = 0; l < n_layers; ++l) {
          const auto kp = models::extract_pair_b2(l, cand_prev, cand_next,
                                                  factors[l].g_tilde);
          const auto seed = rng::derive_seed(
              cfg.seed, static_cast<std::uint64_t>(k),
              static_cast<std::uint64_t>(rng::Purpose::sketch), l);
          if (feed_block_pair(layer_blocks[l], kp, cfg, seed)) pair_flag = 1;
        }
        have_cache_pair = false;
      }
    }

    // Assemble the refinement once; the lambda retry loop reuses it.
    refinement::CompactLbfgs comp =
        cfg.method == Method::s4qn ? qn.compact(n)
                                   : refinement::CompactLbfgs(0.0, n);
    std::vector<refinement::CompactLbfgs> layer_comps;
    if (cfg.method == Method::skqn_l) {
      layer_comps.reserve(n_layers);
      for (std::size_t l = 0; l < n_layers; ++l) {
        const Eigen::Index len = layered->layers()[l].param_count();
        layer_comps.push_back(layer_qn[l].live
                                  ? refinement::build_compact(
                                        layer_qn[l].buffer, layer_qn[l].gamma,
                                        len)
                                  : refinement::CompactLbfgs(0.0, len));
      }
    }

    double alpha_k = std::min(cfg.alpha.at(k), alpha_cap);
    double lambda_used = 0.0;
    Vector d;
    if (cfg.method == Method::sgd_baseline) {
      d = -alpha_k * g;
    } else {
      const auto solve_once = [&](double lam) -> Vector {
        switch (cfg.method) {
          case Method::ssn:
          case Method::s4qn:
            if (cfg.base == BaseKind::efim_lowrank) {
              return solver::direction_lowrank(qbase, comp, lam, g);
            }
            return solver::direction_smw(hbase, comp, lam, g);
          case Method::skqn_l: {
            Vector out(n);
            for (std::size_t l = 0; l < n_layers; ++l) {
              const auto& spec = layered->layers()[l];
              out.segment(spec.offset, spec.param_count()) =
                  solver::direction_kron_compact(
                      factors[l].a_hat, factors[l].g_tilde, layer_comps[l],
                      lam, Vector(g.segment(spec.offset, spec.param_count())));
            }
            return out;
          }
          case Method::skqn_b1:
          case Method::skqn_b2: {
            static const Matrix kNoBlock;
            Vector out(n);
            for (std::size_t l = 0; l < n_layers; ++l) {
              const auto& spec = layered->layers()[l];
              const Matrix& block = layer_blocks[l].initialized
                                        ? layer_blocks[l].lambda
                                        : kNoBlock;
              out.segment(spec.offset, spec.param_count()) =
                  solver::direction_kron(
                      factors[l].a_hat, factors[l].g_tilde, block, lam,
                      Vector(g.segment(spec.offset, spec.param_count())),
                      cfg.kron_mode);
            }
            return out;
          }
          default:
            throw ConfigError("unreachable method dispatch");
        }
      };
      double lam = cfg.local_mode
                       ? 1e-12
                       : schedule::lambda_k(prev_gnorm, alpha_k, cfg.r1,
                                            cfg.r2);
      int tries = 0;
      for (;;) {
        try {
          d = solve_once(lam);
          break;
        } catch (const NotPositiveDefinite&) {
          if (++tries > kMaxLambdaDoublings) {
            throw SolveFailed(
                "direction solve still failing after 40 lambda increases");
          }
          lam *= 2.0;
        }
      }
      lambda_used = lam;
    }

    const double beta = cfg.local_mode ? 1.0 : cfg.beta;
    Vector theta_next = theta + beta * d;
    if (!linalg::all_finite(theta_next)) {
      throw SolveFailed("iterate left the finite range");
    }

    // Form next iteration's pair material at the new point.
    const Vector u = theta_next - theta;
    const bool moved = u.norm() > 0.0;
    if (standard_pairs) {
      if (moved) {
        Vector g_end = problem.gradient(theta_next, sg.span());
        cost += static_cast<double>(sg.size());
        candidate.u = u;
        candidate.v_hat = g_end - g;
        candidate.v = Vector();
        have_candidate = true;
        cached_batch = sg.indices;
        cached_grad = std::move(g_end);
        have_cached_grad = true;
      } else {
        // Nothing moved: the gradient at theta_next is the one already held.
        cached_batch = sg.indices;
        cached_grad = g;
        have_cached_grad = true;
      }
    } else if (cfg.method == Method::s4qn &&
               cfg.pair_mode == PairMode::structured) {
      if (moved) {
        candidate.u = u;
        candidate.v_hat = Vector();
        candidate.v =
            models::structured_pair_v(problem, theta, theta_next, sh.span());
        cost += 2.0 * static_cast<double>(sh.size());
        have_candidate = true;
      }
    } else if (cfg.method == Method::skqn_b2) {
      cand_prev = std::move(capture);
      cand_next = layered->forward_backward(theta_next, sh.span());
      cost += static_cast<double>(sh.size());
      have_cache_pair = true;
      if (same_indices(cand_next.batch, sg.indices)) {
        cached_batch = sg.indices;
        cached_grad = cand_next.gradient;
        have_cached_grad = true;
      }
    }

    epochs += cost / static_cast<double>(data_n);

    IterationRow row;
    row.k = k;
    row.epoch = epochs;
    row.gnorm = gnorm;
    row.lambda = lambda_used;
    row.sg = static_cast<long>(sg.size());
    row.sh = needs_base ? static_cast<long>(sh.size()) : 0;
    row.pair = pair_flag;

    double full_loss_val = kNan;
    if (cfg.loss_metric == LossMetric::full || cfg.relerr_enabled) {
      full_loss_val = problem.full_loss(theta_next);
    }
    row.loss = cfg.loss_metric == LossMetric::full
                   ? full_loss_val
                   : problem.loss(theta_next, sg.span());
    if (!std::isfinite(row.loss)) {
      throw NonFiniteLoss("objective is not finite");
    }
    row.relerr = cfg.relerr_enabled
                     ? (full_loss_val - rec.psi_star) /
                           std::max(1.0, std::abs(rec.psi_star))
                     : kNan;

    const bool probe = cfg.probe_interval <= 0.0 || epochs >= next_probe;
    if (probe) {
      row.fullgnorm = problem.full_gradient(theta_next).norm();
      if (cfg.probe_interval > 0.0) {
        while (next_probe <= epochs) next_probe += cfg.probe_interval;
      }
    } else {
      row.fullgnorm = kNan;
    }

    if (cfg.record_timing) {
      row.ms = std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - t_start)
                   .count();
    }
    rec.rows.push_back(row);

    theta = std::move(theta_next);
    if (cfg.record_iterates) rec.iterates.push_back(theta);
    prev_gnorm = gnorm;
    ++k;

    if (cfg.tol > 0.0 && probe && row.fullgnorm <= cfg.tol) {
      stop = "tol";
      break;
    }
  }

  rec.theta_final = std::move(theta);
  rec.epochs = epochs;
  rec.iterations = k;
  rec.stop_reason = stop;
  return rec;
}

}  // namespace s2qn::engine
