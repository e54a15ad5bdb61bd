#ifndef S2QN_TOOLS_CONFIG_HPP
#define S2QN_TOOLS_CONFIG_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"
#include "s2qn/engine.hpp"
#include "s2qn/models.hpp"

namespace s2qn::tools {

// Insertion-ordered so the resolved form serializes with a stable key order.
using Json = nlohmann::ordered_json;

struct LoadedRun {
  engine::RunConfig config;
  std::shared_ptr<models::Problem> problem;
  // Canonical view of the config: every default materialized, keys in a fixed
  // order, the --seed override already applied. Feeding this file back in
  // reproduces the run byte for byte.
  Json resolved;
  // Canonical problem block alone; compare uses it to reject mixed problems.
  std::string problem_key;
};

// Reads a JSON run config, builds the problem, validates everything.
// Unknown keys are errors at every nesting level. Throws s2qn::ConfigError.
LoadedRun load_run(const std::string& path,
                   std::optional<std::uint64_t> seed_override);

}  // namespace s2qn::tools

#endif  // S2QN_TOOLS_CONFIG_HPP
