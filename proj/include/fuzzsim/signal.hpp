#pragma once

// Fixed-time signal plans and their evaluation over time.

#include <limits>
#include <set>
#include <string>
#include <vector>

#include "fuzzsim/network.hpp"

namespace fuzzsim::signal {

struct Phase {
  std::string name;
  double green = 0.0;  // s
  std::vector<std::string> permitted;
  std::vector<std::string> permissive;  // subset of permitted that yields
};

struct PhasePlan {
  std::string name;
  std::vector<Phase> phases;
  double intergreen = 3.0;  // all-red between consecutive phases, s
  double offset = 0.0;      // s
  /// Not signal controlled: permissive green at all times.
  std::vector<std::string> uncontrolled;
  /// Non-motor lefts served as two successive through crossings.
  std::vector<std::string> twice_crossing;

  double cycle() const noexcept;
};

struct SignalState {
  int phase = -1;  // -1 during intergreen
  std::set<std::string> green;
  std::set<std::string> permissive;  // subset of green
};

/// Pure function of time; periodic with the cycle.
SignalState signal_state(const PhasePlan& plan, double t);

/// Empty when the plan is consistent with the network.
std::vector<std::string> validate_plan(const PhasePlan& plan, const net::Network& net);

/// Built-in plans 1..3 for a standard cross. `greens` overrides the default
/// green durations (one per phase); empty keeps the defaults.
PhasePlan builtin_plan(int which, const net::Network& net, std::vector<double> greens = {},
                       double intergreen = 3.0);
/// "plan1" / "plan2" / "plan3".
PhasePlan builtin_plan(const std::string& name, const net::Network& net, std::vector<double> greens = {},
                       double intergreen = 3.0);

std::vector<double> default_greens(int which);

enum class Indication : unsigned char { red, protected_green, permissive_green };

/// Plan resolved against a network for per-step lookups by movement index.
class CompiledPlan {
 public:
  CompiledPlan() = default;
  CompiledPlan(const PhasePlan& plan, const net::Network& net);

  const PhasePlan& plan() const noexcept { return plan_; }
  double cycle() const noexcept { return cycle_; }
  /// Phase index active at t, or -1 in intergreen.
  int phase_at(double t) const noexcept;
  Indication indication(int movement, double t) const noexcept;
  bool is_green(int movement, double t) const noexcept { return indication(movement, t) != Indication::red; }
  /// Seconds of green left for the movement at t; 0 when red, infinity
  /// when uncontrolled.
  double green_remaining(int movement, double t) const noexcept;
  bool twice_crossing(int movement) const noexcept { return twice_[std::size_t(movement)] != 0; }
  bool uncontrolled(int movement) const noexcept { return uncontrolled_[std::size_t(movement)] != 0; }

 private:
  double position(double t) const noexcept;

  PhasePlan plan_;
  double cycle_ = 0.0;
  std::vector<double> starts_;                   // green start of each phase within the cycle
  std::vector<std::vector<Indication>> table_;  // [phase][movement]
  std::vector<unsigned char> uncontrolled_;
  std::vector<unsigned char> twice_;
};

inline constexpr double kForever = std::numeric_limits<double>::infinity();

}  // namespace fuzzsim::signal
