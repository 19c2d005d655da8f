#pragma once

// Scenario files: strict JSON schema, defaults, validation and run manifests.

#include <cstdint>
#include <string>
#include <vector>

#include "fuzzsim/errors.hpp"
#include "fuzzsim/metrics.hpp"
#include "fuzzsim/sim.hpp"

namespace fuzzsim::scenario {

inline constexpr const char* kSchemaVersion = "fuzzsim-scenario/1";
inline constexpr std::uint64_t kDefaultSeed = 42;

/// Malformed scenario text; line and column are 1-based, 0 when unknown.
class ParseError : public InputError {
 public:
  ParseError(const std::string& msg, int line, int column)
      : InputError(msg), line_(line), column_(column) {}
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

struct Scenario {
  std::string version;
  std::string name;
  std::string description;
  std::string plan_ref;  // built-in plan name, or "inline"
  sim::Setup setup;
  bool seed_defaulted = false;
  double moe_interval = 900.0;
  metrics::RollingOptions assess;
  std::string detectors;  // optional feed path, resolved against the file
  std::string hash;       // content hash of the scenario text
  std::string source;     // file path, empty for in-memory text
};

/// FNV-1a 64-bit over the bytes, as 16 hex digits.
std::string content_hash(const std::string& text);

/// Throws ParseError for syntax, unknown fields, wrong types or unknown
/// names; ValidationError carrying every semantic violation otherwise.
Scenario parse_scenario(const std::string& text, const std::string& origin = "");
Scenario load_scenario(const std::string& path);

/// Same scenario under a built-in plan ("plan1".."plan3").
Scenario with_builtin_plan(const Scenario& s, const std::string& plan);

/// JSON text describing a run well enough to repeat it.
std::string manifest_json(const Scenario& s, std::uint64_t seed, const std::string& command);

}  // namespace fuzzsim::scenario
