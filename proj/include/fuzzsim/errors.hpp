#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fuzzsim {

/// Bad caller input: missing variables, non-finite values, unknown ids.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Aggregated fuzzy set is zero everywhere on the output universe.
class DefuzzificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A structural check failed; carries every violation found.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> violations_;
};

/// Internal invariant breach during a run (collision, lost vehicle).
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fuzzsim
