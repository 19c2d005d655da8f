#include "fuzzsim/driver.hpp"

#include <algorithm>
#include <cmath>

#include "fuzzsim/errors.hpp"

namespace fuzzsim::driver {

using fuzzy::FuzzyVariable;
using fuzzy::RuleBase;

const char* to_string(VehicleClass c) noexcept {
  return c == VehicleClass::motor ? "motor" : "non_motor";
}

const char* to_string(LaneDecision d) noexcept {
  switch (d) {
    case LaneDecision::to_nearside: return "to_nearside";
    case LaneDecision::to_offside: return "to_offside";
    default: return "stay";
  }
}

void DriverParams::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InputError(std::string("driver ") + what + " must be positive");
  };
  positive(desired_speed, "desired_speed");
  positive(desired_time_headway, "desired_time_headway");
  positive(standstill_gap, "standstill_gap");
  positive(max_accel, "max_accel");
  positive(max_decel, "max_decel");
  positive(decision_period, "decision_period");
  if (!(lc_intention_threshold > 0.0 && lc_intention_threshold < 1.0))
    throw InputError("driver lc_intention_threshold must lie in (0,1)");
  if (max_decel < max_accel) throw InputError("driver max_decel must be >= max_accel");
}

DriverParams DriverParams::motor_default() { return {}; }

DriverParams DriverParams::non_motor_default() {
  DriverParams p;
  p.desired_speed = 4.5;
  p.desired_time_headway = 1.0;
  p.standstill_gap = 1.0;
  p.max_accel = 1.0;
  p.max_decel = 2.5;
  return p;
}

FuzzyConfig FuzzyConfig::non_motor_default() {
  FuzzyConfig c;
  c.dv_range = 3.0;
  c.response_range = 2.5;
  return c;
}

std::size_t blended_consequent(std::size_t i, std::size_t j, std::size_t n) noexcept {
  const std::size_t twice = i + j;        // 2 * (i+j)/2
  const std::size_t centre2 = n - 1;      // 2 * centre level
  std::size_t level = twice / 2;
  if (twice % 2 == 1 && twice > centre2) level += 1;
  return std::min(level, n - 1);
}

namespace {

// Table rows/columns use level 0 for V1/S1/PR1/... (the first row of the
// tables) while the variables store terms in ascending-x order.
std::vector<std::string> level_names(const char* prefix, int n) {
  std::vector<std::string> names;
  for (int k = 1; k <= n; ++k) names.push_back(prefix + std::to_string(k));
  return names;
}

std::vector<std::string> reversed(std::vector<std::string> v) {
  std::reverse(v.begin(), v.end());
  return v;
}

std::vector<fuzzy::FuzzyRule> blended_rules(const FuzzyVariable& a, const std::vector<std::string>& a_levels,
                                            const FuzzyVariable& b, const std::vector<std::string>& b_levels,
                                            const FuzzyVariable& /*out*/,
                                            const std::vector<std::string>& out_levels,
                                            const std::vector<RuleOverride>& fixed,
                                            const std::vector<RuleOverride>& user) {
  std::vector<fuzzy::FuzzyRule> rules;
  for (std::size_t i = 0; i < a_levels.size(); ++i)
    for (std::size_t j = 0; j < b_levels.size(); ++j)
      rules.push_back({{{a.name(), a_levels[i]}, {b.name(), b_levels[j]}},
                       out_levels[blended_consequent(i, j, out_levels.size())]});
  auto apply = [&](const RuleOverride& o) {
    for (auto& r : rules)
      if (r.antecedents[0].term == o.first && r.antecedents[1].term == o.second) {
        r.consequent = o.consequent;
        return;
      }
    throw InputError("rule override references unknown terms " + o.first + "/" + o.second);
  };
  for (const auto& o : fixed) apply(o);
  for (const auto& o : user) apply(o);
  return rules;
}

std::vector<RuleOverride> diagonal(const std::vector<std::string>& a, const std::vector<std::string>& b,
                                   const std::vector<std::string>& out) {
  std::vector<RuleOverride> d;
  for (std::size_t k = 0; k < a.size(); ++k) d.push_back({a[k], b[k], out[k]});
  return d;
}

FuzzyVariable unit_partition(const char* name, const char* prefix) {
  // Level 1 (High/Good) sits at 1, the last level at 0.
  return FuzzyVariable::uniform_partition(name, 0.0, 1.0, reversed(level_names(prefix, 3)));
}

FuzzyVariable intention_variable(const char* name) {
  return FuzzyVariable::inner_triangles(name, 0.0, 1.0, {"low", "medium", "high"}, {0.25, 0.5, 0.75});
}

RuleBase make_car_following(const FuzzyConfig& cfg) {
  if (!(cfg.dv_range > 0 && cfg.dssd_max > 0 && cfg.response_range > 0))
    throw InputError("fuzzy universes must be positive");
  const auto v_levels = level_names("V", 5);  // V1 opening fast ... V5 closing fast
  const auto s_levels = level_names("S", 5);  // S1 much too far ... S5 much too close
  auto dv = FuzzyVariable::uniform_partition("DV", -cfg.dv_range, cfg.dv_range, reversed(v_levels), "m/s");
  auto dssd = FuzzyVariable::uniform_partition("DSSD", 0.0, cfg.dssd_max, reversed(s_levels));
  // Peaks at 0.32 r and 0.64 r fall on grid points of the default 1001-point
  // centroid grid and keep every triangle inside [-r, r].
  const double r = cfg.response_range;
  const double step = 0.32 * r;
  auto response = FuzzyVariable::inner_triangles(
      "response", -r, r, reversed(kResponseTerms), {-2 * step, -step, 0.0, step, 2 * step}, "m/s^2");

  auto fixed = diagonal(v_levels, s_levels, kResponseTerms);
  fixed.push_back({"V2", "S4", "no_action"});
  auto rules = blended_rules(dv, v_levels, dssd, s_levels, response, kResponseTerms, fixed,
                             cfg.car_following_overrides);
  return RuleBase({std::move(dv), std::move(dssd)}, std::move(response), std::move(rules));
}

RuleBase make_lcn(const FuzzyConfig& cfg) {
  const auto pr = level_names("PR", 3);
  const auto gs = level_names("GS", 3);
  auto pr_var = unit_partition("PR", "PR");
  auto gs_var = unit_partition("GS", "GS");
  auto out = intention_variable("LCN");
  auto fixed = diagonal(pr, gs, kIntentionTerms);
  fixed.push_back({"PR1", "GS3", "medium"});
  auto rules = blended_rules(pr_var, pr, gs_var, gs, out, kIntentionTerms, fixed, cfg.lcn_overrides);
  return RuleBase({std::move(pr_var), std::move(gs_var)}, std::move(out), std::move(rules));
}

RuleBase make_lco(const FuzzyConfig& cfg) {
  const auto ob = level_names("OB", 3);
  const auto op = level_names("OP", 3);
  auto ob_var = unit_partition("OB", "OB");
  auto op_var = unit_partition("OP", "OP");
  auto out = intention_variable("LCO");
  auto rules = blended_rules(ob_var, ob, op_var, op, out, kIntentionTerms, diagonal(ob, op, kIntentionTerms),
                             cfg.lco_overrides);
  return RuleBase({std::move(ob_var), std::move(op_var)}, std::move(out), std::move(rules));
}

}  // namespace

CarFollowingModel::CarFollowingModel(const FuzzyConfig& cfg) : rules_(make_car_following(cfg)) {}

std::string CarFollowingModel::consequent(int v_level, int s_level) const {
  const std::size_t vi = dv_var().term_index("V" + std::to_string(v_level));
  const std::size_t si = dssd_var().term_index("S" + std::to_string(s_level));
  const std::size_t idx[2] = {vi, si};
  return response_var().term(rules_.consequent(idx)).name;
}

LaneChangeModel::LaneChangeModel(const FuzzyConfig& cfg) : lcn_(make_lcn(cfg)), lco_(make_lco(cfg)) {}

double compute_dssd(double gap, double desired_gap) {
  if (!(desired_gap > 0.0)) throw InputError("desired gap must be positive");
  return gap / desired_gap;
}

double following_acceleration(const CarFollowingModel& cf, double dv, double dssd, const DriverParams& p) {
  const double in[2] = {dv, dssd};
  double a = 0.0;
  try {
    a = cf.rulebase().infer_crisp(in);
  } catch (const DefuzzificationError&) {
    a = 0.0;  // no rule fired: no action
  }
  return std::clamp(a, -p.max_decel, p.max_accel);
}

double free_acceleration(const DriverParams& p, double speed, double gain) noexcept {
  return std::clamp(gain * (p.desired_speed - speed), -p.max_decel, p.max_accel);
}

double pressure_from_rear(double rear_dv, double rear_gap, const DriverParams& p) noexcept {
  if (!std::isfinite(rear_gap)) return 0.0;
  const double closing = std::max(0.0, -rear_dv);
  return std::clamp(closing * p.desired_time_headway / std::max(rear_gap, p.standstill_gap), 0.0, 1.0);
}

double gap_satisfaction(double lead_gap, double lag_gap, const DriverParams& p, double speed) noexcept {
  const double g = std::min(lead_gap, lag_gap);
  if (!std::isfinite(g)) return 1.0;
  return std::clamp(g / compute_desired_gap(p, speed), 0.0, 1.0);
}

double overtaking_benefit(const DriverParams& p, double own_speed, double leader_speed,
                          double lead_gap) noexcept {
  if (!std::isfinite(lead_gap) || lead_gap > 2.0 * compute_desired_gap(p, own_speed)) return 0.0;
  const double gain = (p.desired_speed - std::min(leader_speed, own_speed)) / p.desired_speed;
  return std::clamp(gain, 0.0, 1.0);
}

double lcn_intention(const LaneChangeModel& lc, double pressure, double gap_sat) {
  const double in[2] = {pressure, gap_sat};
  return lc.lcn_rules().infer_crisp(in);
}

double lco_intention(const LaneChangeModel& lc, double benefit, double opportunity) {
  const double in[2] = {benefit, opportunity};
  return lc.lco_rules().infer_crisp(in);
}

bool safety_gap_check(double lag_gap, double lag_dv, const DriverParams& p) noexcept {
  if (!std::isfinite(lag_gap)) return true;
  const double closing = std::max(0.0, -lag_dv);
  return lag_gap > p.standstill_gap + closing * closing / (2.0 * p.max_decel);
}

LaneChangeOutcome decide_lane_change(const LaneChangeModel& lc, const DriverParams& p,
                                     const LaneChangeContext& ctx) {
  LaneChangeOutcome out;
  // The lead gap in the target lane must also leave room to slot in.
  auto safe = [&](const TargetLane& t) {
    return t.available && t.lead_gap > p.standstill_gap &&
           safety_gap_check(t.lag_gap, ctx.speed - t.lag_speed, p);
  };
  const bool near_ok = safe(ctx.nearside);
  const bool off_ok = safe(ctx.offside);

  if (ctx.nearside.available) {
    const double pressure = pressure_from_rear(ctx.speed - ctx.rear_speed, ctx.rear_gap, p);
    const double gs = gap_satisfaction(ctx.nearside.lead_gap, ctx.nearside.lag_gap, p, ctx.speed);
    out.lcn = lcn_intention(lc, pressure, gs);
  }
  if (ctx.offside.available) {
    const double benefit = overtaking_benefit(p, ctx.speed, ctx.leader_speed, ctx.leader_gap);
    const double op = overtaking_opportunity(ctx.offside.lead_gap, ctx.offside.lag_gap, p, ctx.speed);
    out.lco = lco_intention(lc, benefit, op);
  }

  if (ctx.required == LaneDecision::to_nearside && near_ok) {
    out.decision = LaneDecision::to_nearside;
    return out;
  }
  if (ctx.required == LaneDecision::to_offside && off_ok) {
    out.decision = LaneDecision::to_offside;
    return out;
  }
  const bool near = near_ok && out.lcn >= p.lc_intention_threshold;
  const bool off = off_ok && out.lco >= p.lc_intention_threshold;
  if (near && (!off || out.lcn >= out.lco))
    out.decision = LaneDecision::to_nearside;
  else if (off)
    out.decision = LaneDecision::to_offside;
  return out;
}

}  // namespace fuzzsim::driver
