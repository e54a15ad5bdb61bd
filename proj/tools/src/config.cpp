#include "config.hpp"

#include <fstream>
#include <initializer_list>
#include <utility>
#include <vector>

#include "s2qn/dataio.hpp"
#include "s2qn/errors.hpp"
#include "s2qn/rng.hpp"

namespace s2qn::tools {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

void check_keys(const Json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known) fail("unknown key '" + item.key() + "' in " + where);
  }
}

double get_num(const Json& obj, const char* key, double def) {
  if (!obj.contains(key)) return def;
  const Json& v = obj.at(key);
  if (!v.is_number()) fail(std::string("'") + key + "' must be a number");
  return v.get<double>();
}

std::int64_t get_int(const Json& obj, const char* key, std::int64_t def) {
  if (!obj.contains(key)) return def;
  const Json& v = obj.at(key);
  if (!v.is_number_integer())
    fail(std::string("'") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::uint64_t get_uint(const Json& obj, const char* key, std::uint64_t def) {
  if (!obj.contains(key)) return def;
  const Json& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  fail(std::string("'") + key + "' must be a non-negative integer");
}

bool get_bool(const Json& obj, const char* key, bool def) {
  if (!obj.contains(key)) return def;
  const Json& v = obj.at(key);
  if (!v.is_boolean()) fail(std::string("'") + key + "' must be a boolean");
  return v.get<bool>();
}

std::string get_str(const Json& obj, const char* key, const std::string& def) {
  if (!obj.contains(key)) return def;
  const Json& v = obj.at(key);
  if (!v.is_string()) fail(std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

std::vector<int> get_int_array(const Json& obj, const char* key,
                               std::vector<int> def) {
  if (!obj.contains(key)) return def;
  const Json& v = obj.at(key);
  if (!v.is_array()) fail(std::string("'") + key + "' must be an array");
  std::vector<int> out;
  for (const Json& e : v) {
    if (!e.is_number_integer())
      fail(std::string("'") + key + "' entries must be integers");
    out.push_back(e.get<int>());
  }
  return out;
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double scale,
                       std::uint64_t seed, std::uint64_t extra) {
  rng::Stream stream(rng::derive_seed(
      seed, 0, static_cast<std::uint64_t>(rng::Purpose::data_synth), extra));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = scale * stream.next_gaussian();
  return m;
}

struct BuiltProblem {
  std::shared_ptr<models::Problem> problem;
  Json canonical;
};

BuiltProblem build_problem(const Json& pj) {
  if (!pj.is_object()) fail("'problem' must be an object");
  const std::string kind = get_str(pj, "kind", "");
  if (kind.empty()) fail("'problem.kind' is required");

  Json out;
  out["kind"] = kind;

  if (kind == "synth-logistic") {
    check_keys(pj, "problem",
               {"kind", "n", "count", "seed", "profile", "kappa", "scale",
                "theta_scale", "mu"});
    dataio::SynthLogisticSpec spec;
    spec.n = get_int(pj, "n", 100);
    spec.count = get_int(pj, "count", 2000);
    spec.seed = get_uint(pj, "seed", 1);
    spec.profile = get_str(pj, "profile", "gaussian");
    spec.kappa = get_num(pj, "kappa", 1.0);
    spec.scale = get_num(pj, "scale", 1.0);
    spec.theta_scale = get_num(pj, "theta_scale", 1.0);
    const double mu = get_num(pj, "mu", 1e-3);
    if (spec.n <= 0 || spec.count <= 0) fail("'n' and 'count' must be positive");
    if (spec.profile != "gaussian" && spec.profile != "orthonormal")
      fail("'profile' must be gaussian or orthonormal");
    if (spec.kappa < 1.0) fail("'kappa' must be >= 1");
    if (mu < 0.0) fail("'mu' must be non-negative");
    out["n"] = spec.n;
    out["count"] = spec.count;
    out["seed"] = spec.seed;
    out["profile"] = spec.profile;
    out["kappa"] = spec.kappa;
    out["scale"] = spec.scale;
    out["theta_scale"] = spec.theta_scale;
    out["mu"] = mu;
    auto synth = dataio::synth_logistic(spec);
    return {std::make_shared<models::LogisticRegressionProblem>(
                std::move(synth.data), mu),
            std::move(out)};
  }

  if (kind == "libsvm") {
    check_keys(pj, "problem", {"kind", "path", "mu", "normalize"});
    const std::string path = get_str(pj, "path", "");
    if (path.empty()) fail("'problem.path' is required for libsvm");
    const double mu = get_num(pj, "mu", 1e-3);
    const bool normalize = get_bool(pj, "normalize", false);
    if (mu < 0.0) fail("'mu' must be non-negative");
    out["path"] = path;
    out["mu"] = mu;
    out["normalize"] = normalize;
    dataio::Dataset data = dataio::read_libsvm(path);
    if (normalize) dataio::normalize_maxabs(data);
    return {std::make_shared<models::LogisticRegressionProblem>(std::move(data),
                                                                mu),
            std::move(out)};
  }

  if (kind == "synth-curves-autoencoder") {
    check_keys(pj, "problem",
               {"kind", "count", "seed", "dims", "activation", "loss"});
    const auto count = get_int(pj, "count", 64);
    const auto seed = get_uint(pj, "seed", 1);
    auto dims = get_int_array(pj, "dims", {256, 64, 256});
    const std::string act = get_str(pj, "activation", "sigmoid");
    const std::string loss = get_str(pj, "loss", "square");
    if (count <= 0) fail("'count' must be positive");
    if (dims.size() < 2 || dims.front() != 256 || dims.back() != 256)
      fail("'dims' must start and end with 256 (16x16 images)");
    out["count"] = count;
    out["seed"] = seed;
    out["dims"] = dims;
    out["activation"] = act;
    out["loss"] = loss;
    Matrix x = dataio::synth_curves_toy(count, seed);
    return {std::make_shared<models::MlpProblem>(
                x, x, std::move(dims), models::activation_from_string(act),
                models::loss_from_string(loss)),
            std::move(out)};
  }

  if (kind == "synth-net") {
    check_keys(pj, "problem",
               {"kind", "count", "seed", "dims", "activation", "loss",
                "input_scale", "target_scale"});
    const auto count = get_int(pj, "count", 64);
    const auto seed = get_uint(pj, "seed", 1);
    auto dims = get_int_array(pj, "dims", {});
    const std::string act = get_str(pj, "activation", "sigmoid");
    const std::string loss = get_str(pj, "loss", "square");
    const double in_scale = get_num(pj, "input_scale", 1.0);
    const double tg_scale = get_num(pj, "target_scale", 1.0);
    if (count <= 0) fail("'count' must be positive");
    if (dims.size() < 2) fail("'dims' needs at least input and output widths");
    for (int d : dims)
      if (d <= 0) fail("'dims' entries must be positive");
    out["count"] = count;
    out["seed"] = seed;
    out["dims"] = dims;
    out["activation"] = act;
    out["loss"] = loss;
    out["input_scale"] = in_scale;
    out["target_scale"] = tg_scale;
    Matrix x = gaussian_matrix(count, dims.front(), in_scale, seed, 0);
    Matrix y = gaussian_matrix(count, dims.back(), tg_scale, seed, 1);
    return {std::make_shared<models::MlpProblem>(
                std::move(x), std::move(y), std::move(dims),
                models::activation_from_string(act),
                models::loss_from_string(loss)),
            std::move(out)};
  }

  if (kind == "synth-curves-conv") {
    check_keys(pj, "problem", {"kind", "count", "seed", "radius", "loss"});
    const auto count = get_int(pj, "count", 32);
    const auto seed = get_uint(pj, "seed", 1);
    const int radius = static_cast<int>(get_int(pj, "radius", 1));
    const std::string loss = get_str(pj, "loss", "square");
    if (count <= 0) fail("'count' must be positive");
    if (radius < 0) fail("'radius' must be non-negative");
    out["count"] = count;
    out["seed"] = seed;
    out["radius"] = radius;
    out["loss"] = loss;
    Matrix x = dataio::synth_curves_toy(count, seed);
    return {std::make_shared<models::ConvProblem>(
                x, x, 1, 1, radius, 16, 16, models::loss_from_string(loss)),
            std::move(out)};
  }

  fail("unknown problem kind '" + kind +
       "' (expected synth-logistic, libsvm, synth-curves-autoencoder, "
       "synth-net or synth-curves-conv)");
}

const char* alpha_kind_name(schedule::AlphaKind k) {
  return k == schedule::AlphaKind::constant ? "constant" : "polynomial";
}

const char* batch_kind_name(schedule::BatchKind k) {
  switch (k) {
    case schedule::BatchKind::constant: return "constant";
    case schedule::BatchKind::geometric: return "geometric";
    default: return "superlinear";
  }
}

const char* p_choice_name(refinement::PChoice p) {
  switch (p) {
    case refinement::PChoice::trace: return "trace";
    case refinement::PChoice::diagonal: return "diagonal";
    default: return "symmetric";
  }
}

void parse_batch(const Json& root, const char* name,
                 schedule::BatchRule& rule) {
  if (!root.contains(name)) return;
  const Json& b = root.at(name);
  if (!b.is_object()) fail(std::string("'") + name + "' must be an object");
  check_keys(b, name, {"kind", "s0", "rho"});
  rule.kind = schedule::batch_kind_from_string(get_str(b, "kind", "constant"));
  rule.s0 = get_int(b, "s0", rule.s0);
  rule.rho = get_num(b, "rho", rule.rho);
}

Json batch_json(const schedule::BatchRule& rule) {
  Json b;
  b["kind"] = batch_kind_name(rule.kind);
  b["s0"] = rule.s0;
  b["rho"] = rule.rho;
  return b;
}

}  // namespace

LoadedRun load_run(const std::string& path,
                   std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: " + path);
  Json root;
  try {
    // Hand-written configs may carry // comments; emitted ones never do.
    root = Json::parse(in, nullptr, /*allow_exceptions=*/true,
                       /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    fail("config is not valid json: " + std::string(e.what()));
  }
  if (!root.is_object()) fail("top level must be an object");

  check_keys(root, "top level",
             {"schema_version", "problem", "method", "base", "pair_mode",
              "alpha", "beta", "r1", "r2", "theory_mode", "l_psi_estimate",
              "h_estimate", "gradient_batch", "hessian_batch", "memory",
              "epsilon_b", "damping", "strict_pair_refresh", "p_choice",
              "sketch", "kron_mode", "kfac_spatial_average", "seed",
              "init_scale", "max_epochs", "max_iterations", "max_wall_ms",
              "tol", "probe_interval", "local_mode", "record_timing", "relerr",
              "loss_metric"});

  if (!root.contains("schema_version")) fail("'schema_version' is required");
  if (!root.at("schema_version").is_number_integer() ||
      root.at("schema_version").get<std::int64_t>() != 1)
    fail("unsupported schema_version (this tool reads version 1)");
  if (!root.contains("problem")) fail("'problem' is required");

  BuiltProblem built = build_problem(root.at("problem"));

  engine::RunConfig cfg;
  cfg.method = engine::method_from_string(get_str(root, "method", "s4qn"));
  cfg.base = engine::base_from_string(get_str(root, "base", "hessian"));
  cfg.pair_mode =
      engine::pair_mode_from_string(get_str(root, "pair_mode", "standard"));

  if (root.contains("alpha")) {
    const Json& a = root.at("alpha");
    if (!a.is_object()) fail("'alpha' must be an object");
    check_keys(a, "alpha", {"kind", "alpha0", "exponent"});
    cfg.alpha.kind =
        schedule::alpha_kind_from_string(get_str(a, "kind", "constant"));
    cfg.alpha.alpha0 = get_num(a, "alpha0", cfg.alpha.alpha0);
    cfg.alpha.exponent = get_num(a, "exponent", cfg.alpha.exponent);
  }
  cfg.beta = get_num(root, "beta", cfg.beta);
  cfg.r1 = get_num(root, "r1", cfg.r1);
  cfg.r2 = get_num(root, "r2", cfg.r2);
  cfg.theory_mode = get_bool(root, "theory_mode", cfg.theory_mode);
  cfg.l_psi_estimate = get_num(root, "l_psi_estimate", cfg.l_psi_estimate);
  cfg.h_estimate = get_num(root, "h_estimate", cfg.h_estimate);
  parse_batch(root, "gradient_batch", cfg.gradient_batch);
  parse_batch(root, "hessian_batch", cfg.hessian_batch);
  cfg.memory = static_cast<int>(get_int(root, "memory", cfg.memory));
  cfg.epsilon_b = get_num(root, "epsilon_b", cfg.epsilon_b);
  cfg.damping = get_bool(root, "damping", cfg.damping);
  cfg.strict_pair_refresh =
      get_bool(root, "strict_pair_refresh", cfg.strict_pair_refresh);
  cfg.p_choice =
      refinement::p_choice_from_string(get_str(root, "p_choice", "symmetric"));
  if (root.contains("sketch")) {
    const Json& s = root.at("sketch");
    if (!s.is_object()) fail("'sketch' must be an object");
    check_keys(s, "sketch", {"dim", "dist"});
    cfg.sketch.dim = static_cast<int>(get_int(s, "dim", 0));
    const std::string dist = get_str(s, "dist", "gaussian");
    if (dist == "gaussian")
      cfg.sketch.dist = refinement::SketchConfig::Dist::gaussian;
    else if (dist == "row-subsample")
      cfg.sketch.dist = refinement::SketchConfig::Dist::row_subsample;
    else
      fail("unknown sketch dist '" + dist +
           "' (expected gaussian or row-subsample)");
  }
  const std::string km = get_str(root, "kron_mode", "exact");
  if (km == "exact")
    cfg.kron_mode = solver::KronMode::exact;
  else if (km == "pi-split")
    cfg.kron_mode = solver::KronMode::pi_split;
  else
    fail("unknown kron_mode '" + km + "' (expected exact or pi-split)");
  cfg.kfac_spatial_average =
      get_bool(root, "kfac_spatial_average", cfg.kfac_spatial_average);
  cfg.seed = get_uint(root, "seed", cfg.seed);
  if (seed_override) cfg.seed = *seed_override;
  cfg.init_scale = get_num(root, "init_scale", cfg.init_scale);
  cfg.max_epochs = get_num(root, "max_epochs", cfg.max_epochs);
  cfg.max_iterations =
      static_cast<long>(get_int(root, "max_iterations", cfg.max_iterations));
  cfg.max_wall_ms = get_num(root, "max_wall_ms", cfg.max_wall_ms);
  cfg.tol = get_num(root, "tol", cfg.tol);
  cfg.probe_interval = get_num(root, "probe_interval", cfg.probe_interval);
  cfg.local_mode = get_bool(root, "local_mode", cfg.local_mode);
  cfg.record_timing = get_bool(root, "record_timing", cfg.record_timing);
  // relerr needs a computable reference optimum, so it defaults on only for
  // the strongly convex problems.
  const std::string pk = built.canonical.at("kind").get<std::string>();
  const bool lr_like = pk == "synth-logistic" || pk == "libsvm";
  cfg.relerr_enabled = get_bool(root, "relerr", lr_like);
  cfg.loss_metric =
      engine::loss_metric_from_string(get_str(root, "loss_metric", "full"));

  engine::validate_config(cfg, *built.problem);

  Json res;
  res["schema_version"] = 1;
  res["problem"] = built.canonical;
  res["method"] = engine::to_string(cfg.method);
  res["base"] = engine::to_string(cfg.base);
  res["pair_mode"] = engine::to_string(cfg.pair_mode);
  {
    Json a;
    a["kind"] = alpha_kind_name(cfg.alpha.kind);
    a["alpha0"] = cfg.alpha.alpha0;
    a["exponent"] = cfg.alpha.exponent;
    res["alpha"] = std::move(a);
  }
  res["beta"] = cfg.beta;
  res["r1"] = cfg.r1;
  res["r2"] = cfg.r2;
  res["theory_mode"] = cfg.theory_mode;
  res["l_psi_estimate"] = cfg.l_psi_estimate;
  res["h_estimate"] = cfg.h_estimate;
  res["gradient_batch"] = batch_json(cfg.gradient_batch);
  res["hessian_batch"] = batch_json(cfg.hessian_batch);
  res["memory"] = cfg.memory;
  res["epsilon_b"] = cfg.epsilon_b;
  res["damping"] = cfg.damping;
  res["strict_pair_refresh"] = cfg.strict_pair_refresh;
  res["p_choice"] = p_choice_name(cfg.p_choice);
  {
    Json s;
    s["dim"] = cfg.sketch.dim;
    s["dist"] = cfg.sketch.dist == refinement::SketchConfig::Dist::gaussian
                    ? "gaussian"
                    : "row-subsample";
    res["sketch"] = std::move(s);
  }
  res["kron_mode"] =
      cfg.kron_mode == solver::KronMode::exact ? "exact" : "pi-split";
  res["kfac_spatial_average"] = cfg.kfac_spatial_average;
  res["seed"] = cfg.seed;
  res["init_scale"] = cfg.init_scale;
  res["max_epochs"] = cfg.max_epochs;
  res["max_iterations"] = static_cast<std::int64_t>(cfg.max_iterations);
  res["max_wall_ms"] = cfg.max_wall_ms;
  res["tol"] = cfg.tol;
  res["probe_interval"] = cfg.probe_interval;
  res["local_mode"] = cfg.local_mode;
  res["record_timing"] = cfg.record_timing;
  res["relerr"] = cfg.relerr_enabled;
  res["loss_metric"] = engine::to_string(cfg.loss_metric);

  LoadedRun out;
  out.config = std::move(cfg);
  out.problem = std::move(built.problem);
  out.problem_key = built.canonical.dump();
  out.resolved = std::move(res);
  return out;
}

}  // namespace s2qn::tools
