#pragma once

// Fuzzy car-following and lane-changing driver models.

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fuzzsim/fuzzy.hpp"

namespace fuzzsim::driver {

inline constexpr double kNoVehicle = std::numeric_limits<double>::infinity();

enum class VehicleClass { motor, non_motor };

const char* to_string(VehicleClass c) noexcept;

struct DriverParams {
  double desired_speed = 13.9;        // m/s
  double desired_time_headway = 1.5;  // s
  double standstill_gap = 2.0;        // m
  double max_accel = 2.0;             // m/s^2
  double max_decel = 3.5;             // m/s^2, magnitude
  double decision_period = 0.5;       // s
  double lc_intention_threshold = 0.6;

  /// Throws InputError when a field is out of range.
  void validate() const;

  static DriverParams motor_default();
  static DriverParams non_motor_default();
};

/// One entry of a two-input rule matrix replacing the generated consequent.
struct RuleOverride {
  std::string first;   // term of the first input (DV / PR / OB)
  std::string second;  // term of the second input (DSSD / GS / OP)
  std::string consequent;
};

/// Universes and rule overrides for one vehicle class. Term breakpoints are
/// uniform partitions of these universes.
struct FuzzyConfig {
  double dv_range = 6.0;         // DV universe [-dv_range, dv_range], m/s
  double dssd_max = 2.0;         // DSSD universe [0, dssd_max]
  double response_range = 5.0;   // response universe [-r, r], m/s^2
  std::vector<RuleOverride> car_following_overrides;
  std::vector<RuleOverride> lcn_overrides;
  std::vector<RuleOverride> lco_overrides;

  static FuzzyConfig motor_default() { return {}; }
  static FuzzyConfig non_motor_default();
};

/// Consequent index for grid cell (i, j) on an n-level output scale:
/// round((i + j) / 2), with exact halves rounded away from the centre level.
std::size_t blended_consequent(std::size_t i, std::size_t j, std::size_t n) noexcept;

/// Response terms, strongest acceleration first (row order of the rule table).
inline const std::vector<std::string> kResponseTerms = {
    "strong_acceleration", "light_acceleration", "no_action", "light_deceleration",
    "strong_deceleration"};
inline const std::vector<std::string> kIntentionTerms = {"high", "medium", "low"};

class CarFollowingModel {
 public:
  explicit CarFollowingModel(const FuzzyConfig& cfg = FuzzyConfig::motor_default());

  const fuzzy::FuzzyVariable& dv_var() const { return rules_.inputs()[0]; }
  const fuzzy::FuzzyVariable& dssd_var() const { return rules_.inputs()[1]; }
  const fuzzy::FuzzyVariable& response_var() const { return rules_.output(); }
  const fuzzy::RuleBase& rulebase() const noexcept { return rules_; }
  /// Response term name for (V<i+1>, S<j+1>).
  std::string consequent(int v_level, int s_level) const;

 private:
  fuzzy::RuleBase rules_;
};

class LaneChangeModel {
 public:
  explicit LaneChangeModel(const FuzzyConfig& cfg = FuzzyConfig::motor_default());

  const fuzzy::RuleBase& lcn_rules() const noexcept { return lcn_; }
  const fuzzy::RuleBase& lco_rules() const noexcept { return lco_; }
  const fuzzy::FuzzyVariable& pr_var() const { return lcn_.inputs()[0]; }
  const fuzzy::FuzzyVariable& gs_var() const { return lcn_.inputs()[1]; }
  const fuzzy::FuzzyVariable& ob_var() const { return lco_.inputs()[0]; }
  const fuzzy::FuzzyVariable& op_var() const { return lco_.inputs()[1]; }
  const fuzzy::FuzzyVariable& intention_var() const { return lcn_.output(); }

 private:
  fuzzy::RuleBase lcn_;
  fuzzy::RuleBase lco_;
};

/// Both models for one vehicle class.
struct BehaviorModels {
  CarFollowingModel car_following;
  LaneChangeModel lane_change;

  explicit BehaviorModels(const FuzzyConfig& cfg = FuzzyConfig::motor_default())
      : car_following(cfg), lane_change(cfg) {}
};

// --- car following ---------------------------------------------------------

/// Positive when the gap is opening.
inline double compute_dv(double leader_speed, double follower_speed) noexcept {
  return leader_speed - follower_speed;
}

inline double compute_desired_gap(const DriverParams& p, double follower_speed) noexcept {
  return p.standstill_gap + p.desired_time_headway * follower_speed;
}

/// gap / desired_gap. Throws InputError when desired_gap <= 0.
double compute_dssd(double gap, double desired_gap);

/// Fuzzy response clamped to [-max_decel, max_accel].
double following_acceleration(const CarFollowingModel& cf, double dv, double dssd,
                              const DriverParams& p);

inline constexpr double kFreeFlowGain = 0.4;  // 1/s

double free_acceleration(const DriverParams& p, double speed, double gain = kFreeFlowGain) noexcept;

// --- lane changing ---------------------------------------------------------

/// `rear_dv` is own speed minus the rear vehicle's speed (negative when the
/// rear vehicle closes in). Pass kNoVehicle as the gap when there is none.
double pressure_from_rear(double rear_dv, double rear_gap, const DriverParams& p) noexcept;

/// Smaller of the target-lane lead and lag gaps relative to the desired gap,
/// clamped to [0,1]. kNoVehicle marks an empty side.
double gap_satisfaction(double lead_gap, double lag_gap, const DriverParams& p, double speed) noexcept;

inline double overtaking_opportunity(double lead_gap, double lag_gap, const DriverParams& p,
                                     double speed) noexcept {
  return gap_satisfaction(lead_gap, lag_gap, p, speed);
}

/// Speed gained by passing an impeding leader (one within twice the desired
/// gap); 0 without one. Pass kNoVehicle as lead_gap when there is no leader.
double overtaking_benefit(const DriverParams& p, double own_speed, double leader_speed,
                          double lead_gap) noexcept;

double lcn_intention(const LaneChangeModel& lc, double pressure, double gap_sat);
double lco_intention(const LaneChangeModel& lc, double benefit, double opportunity);

/// `lag_dv` is own speed minus the lag vehicle's speed.
bool safety_gap_check(double lag_gap, double lag_dv, const DriverParams& p) noexcept;

enum class LaneDecision { stay, to_nearside, to_offside };

const char* to_string(LaneDecision d) noexcept;

struct TargetLane {
  bool available = false;  // exists and admits the vehicle's class and route
  double lead_gap = kNoVehicle;
  double lead_speed = 0.0;
  double lag_gap = kNoVehicle;
  double lag_speed = 0.0;
};

struct LaneChangeContext {
  double speed = 0.0;
  double leader_gap = kNoVehicle;  // current-lane leader
  double leader_speed = 0.0;
  double rear_gap = kNoVehicle;  // current-lane follower
  double rear_speed = 0.0;
  TargetLane nearside;
  TargetLane offside;
  LaneDecision required = LaneDecision::stay;  // route-mandated direction
};

struct LaneChangeOutcome {
  LaneDecision decision = LaneDecision::stay;
  double lcn = 0.0;
  double lco = 0.0;
};

LaneChangeOutcome decide_lane_change(const LaneChangeModel& lc, const DriverParams& p,
                                     const LaneChangeContext& ctx);

}  // namespace fuzzsim::driver
