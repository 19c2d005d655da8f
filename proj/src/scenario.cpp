#include "fuzzsim/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fuzzsim::scenario {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ParseError((path.empty() ? std::string("scenario") : "'" + path + "'") + ": " + what, 0, 0);
}

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

/// Strict view of one JSON object: every key must be consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  const json& raw(const std::string& k) {
    used_.insert(k);
    return j_.at(k);
  }

  double num(const std::string& k, double def) { return has(k) ? req_num(k) : def; }
  double req_num(const std::string& k) {
    need(k);
    const auto& v = raw(k);
    if (!v.is_number()) fail(join(path_, k), "expected a number");
    return v.get<double>();
  }
  int integer(const std::string& k, int def) {
    if (!has(k)) return def;
    const auto& v = raw(k);
    if (!v.is_number_integer()) fail(join(path_, k), "expected an integer");
    return v.get<int>();
  }
  std::uint64_t u64(const std::string& k, std::uint64_t def) {
    if (!has(k)) return def;
    const auto& v = raw(k);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      fail(join(path_, k), "expected a non-negative integer");
    return v.get<std::uint64_t>();
  }
  bool boolean(const std::string& k, bool def) {
    if (!has(k)) return def;
    const auto& v = raw(k);
    if (!v.is_boolean()) fail(join(path_, k), "expected true or false");
    return v.get<bool>();
  }
  std::string str(const std::string& k, const std::string& def) { return has(k) ? req_str(k) : def; }
  std::string req_str(const std::string& k) {
    need(k);
    const auto& v = raw(k);
    if (!v.is_string()) fail(join(path_, k), "expected a string");
    return v.get<std::string>();
  }
  std::vector<std::string> strings(const std::string& k) {
    std::vector<std::string> out;
    if (!has(k)) return out;
    const auto& v = raw(k);
    if (!v.is_array()) fail(join(path_, k), "expected an array of strings");
    for (const auto& e : v) {
      if (!e.is_string()) fail(join(path_, k), "expected an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }
  std::vector<double> numbers(const std::string& k) {
    std::vector<double> out;
    if (!has(k)) return out;
    const auto& v = raw(k);
    if (!v.is_array()) fail(join(path_, k), "expected an array of numbers");
    for (const auto& e : v) {
      if (!e.is_number()) fail(join(path_, k), "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }
  Reader obj(const std::string& k) { return Reader(raw(k), join(path_, k)); }
  const json& array(const std::string& k) {
    need(k);
    const auto& v = raw(k);
    if (!v.is_array()) fail(join(path_, k), "expected an array");
    return v;
  }
  const std::string& path() const noexcept { return path_; }

  void need(const std::string& k) const {
    if (!has(k)) fail(join(path_, k), "required field missing");
  }
  /// Rejects keys nobody read.
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(join(path_, it.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

net::Side parse_side(const std::string& s, const std::string& path) {
  for (auto side : {net::Side::north, net::Side::east, net::Side::south, net::Side::west})
    if (s == net::to_string(side)) return side;
  fail(path, "unknown side '" + s + "'");
}

net::TurnSet parse_turns(const std::string& s, const std::string& path) {
  net::TurnSet t = 0;
  for (char c : s) {
    if (c == 'L') t |= net::turn_bit(net::Turn::left);
    else if (c == 'T') t |= net::turn_bit(net::Turn::through);
    else if (c == 'R') t |= net::turn_bit(net::Turn::right);
    else fail(path, "lane turns use the letters L, T and R, got '" + s + "'");
  }
  if (t == 0) fail(path, "lane serves no turn");
  return t;
}

net::Network read_network(Reader r) {
  const std::string factory = r.str("factory", "standard_cross");
  if (factory != "standard_cross") fail(join(r.path(), "factory"), "unknown network factory '" + factory + "'");
  net::CrossParams p;
  if (r.has("motor_lanes")) {
    const auto& v = r.raw("motor_lanes");
    if (v.is_number_integer()) {
      p.motor_lanes.fill(v.get<int>());
    } else {
      Reader lanes(v, join(r.path(), "motor_lanes"));
      for (auto side : {net::Side::north, net::Side::east, net::Side::south, net::Side::west})
        p.motor_lanes[std::size_t(side)] = lanes.integer(net::to_string(side), p.motor_lanes[std::size_t(side)]);
      lanes.done();
    }
  }
  if (r.has("lane_turns")) {
    const auto& v = r.raw("lane_turns");
    const std::string path = join(r.path(), "lane_turns");
    if (!v.is_object()) fail(path, "expected an object keyed by side");
    for (auto it = v.begin(); it != v.end(); ++it) {
      const auto side = parse_side(it.key(), join(path, it.key()));
      if (!it.value().is_array()) fail(join(path, it.key()), "expected an array such as [\"TR\", \"LT\"]");
      for (const auto& e : it.value()) {
        if (!e.is_string()) fail(join(path, it.key()), "expected lane turn strings");
        p.lane_turns[std::size_t(side)].push_back(parse_turns(e.get<std::string>(), join(path, it.key())));
      }
    }
  }
  p.non_motor_lane = r.boolean("non_motor_lane", p.non_motor_lane);
  p.lane_width = r.num("lane_width", p.lane_width);
  p.non_motor_lane_width = r.num("non_motor_lane_width", p.non_motor_lane_width);
  p.approach_length = r.num("approach_length", p.approach_length);
  p.exit_length = r.num("exit_length", p.exit_length);
  p.speed_limit = r.num("speed_limit", p.speed_limit);
  p.motor_turn_radius = r.num("motor_turn_radius", p.motor_turn_radius);
  p.non_motor_turn_radius = r.num("non_motor_turn_radius", p.non_motor_turn_radius);
  p.box_margin = r.num("box_margin", p.box_margin);
  p.crosswalk_inset = r.num("crosswalk_inset", p.crosswalk_inset);
  r.done();
  try {
    p.validate();
    return net::standard_cross_intersection(p);
  } catch (const InputError& e) {
    throw ValidationError({std::string("network: ") + e.what()});
  }
}

signal::PhasePlan read_plan(Reader r, const net::Network& net, std::string& ref) {
  if (r.has("builtin")) {
    ref = r.req_str("builtin");
    const auto greens = r.numbers("greens");
    const double intergreen = r.num("intergreen", 3.0);
    const double offset = r.num("offset", 0.0);
    r.done();
    if (ref != "plan1" && ref != "plan2" && ref != "plan3")
      throw ValidationError({"plan: unknown built-in plan '" + ref + "' (expected plan1, plan2 or plan3)"});
    try {
      auto p = signal::builtin_plan(ref, net, greens, intergreen);
      p.offset = offset;
      return p;
    } catch (const InputError& e) {
      throw ValidationError({std::string("plan: ") + e.what()});
    }
  }
  ref = "inline";
  signal::PhasePlan p;
  p.name = r.str("name", "inline");
  p.intergreen = r.num("intergreen", p.intergreen);
  p.offset = r.num("offset", p.offset);
  p.uncontrolled = r.strings("uncontrolled");
  p.twice_crossing = r.strings("twice_crossing");
  const auto& phases = r.array("phases");
  for (std::size_t i = 0; i < phases.size(); ++i) {
    Reader ph(phases[i], join(r.path(), "phases[" + std::to_string(i) + "]"));
    signal::Phase x;
    x.name = ph.str("name", "phase" + std::to_string(i + 1));
    x.green = ph.req_num("green");
    x.permitted = ph.strings("permitted");
    x.permissive = ph.strings("permissive");
    ph.done();
    p.phases.push_back(std::move(x));
  }
  r.done();
  return p;
}

sim::DemandProfile read_demand(Reader r, double start, double duration) {
  sim::DemandProfile d;
  d.start = start;
  d.end = start + duration;
  d.interval = r.num("interval", d.interval);
  const auto& streams = r.array("streams");
  for (std::size_t i = 0; i < streams.size(); ++i) {
    Reader s(streams[i], join(r.path(), "streams[" + std::to_string(i) + "]"));
    sim::DemandStream x;
    x.movement = s.req_str("movement");
    const std::string cls = s.req_str("class");
    try {
      x.cls = net::parse_stream_class(cls);
    } catch (const InputError&) {
      fail(join(s.path(), "class"), "unknown class '" + cls + "' (expected motor, non_motor or pedestrian)");
    }
    s.need("rates");
    x.rates = s.numbers("rates");
    s.done();
    d.streams.push_back(std::move(x));
  }
  r.done();
  return d;
}

sim::TruncatedNormal read_dist(Reader& parent, const std::string& k, sim::TruncatedNormal def) {
  if (!parent.has(k)) return def;
  const auto& v = parent.raw(k);
  if (v.is_number()) return sim::TruncatedNormal::fixed(v.get<double>());
  Reader r(v, join(parent.path(), k));
  sim::TruncatedNormal t;
  t.mean = r.req_num("mean");
  t.sd = r.num("sd", 0.0);
  t.lo = r.num("min", t.mean);
  t.hi = r.num("max", t.mean);
  r.done();
  return t;
}

void read_class(Reader r, sim::ClassSetup& c) {
  auto& d = c.drivers;
  d.desired_speed = read_dist(r, "desired_speed", d.desired_speed);
  d.desired_time_headway = read_dist(r, "desired_time_headway", d.desired_time_headway);
  d.standstill_gap = read_dist(r, "standstill_gap", d.standstill_gap);
  d.max_accel = read_dist(r, "max_accel", d.max_accel);
  d.max_decel = read_dist(r, "max_decel", d.max_decel);
  d.decision_period = r.num("decision_period", d.decision_period);
  d.lc_intention_threshold = r.num("lc_intention_threshold", d.lc_intention_threshold);
  c.length = r.num("length", c.length);
  c.critical_gap = r.num("critical_gap", c.critical_gap);
  r.done();
}

std::vector<driver::RuleOverride> read_overrides(Reader& r, const std::string& k) {
  std::vector<driver::RuleOverride> out;
  if (!r.has(k)) return out;
  const auto& a = r.array(k);
  for (std::size_t i = 0; i < a.size(); ++i) {
    Reader o(a[i], join(r.path(), k + "[" + std::to_string(i) + "]"));
    out.push_back({o.req_str("first"), o.req_str("second"), o.req_str("consequent")});
    o.done();
  }
  return out;
}

void read_fuzzy(Reader r, driver::FuzzyConfig& f) {
  f.dv_range = r.num("dv_range", f.dv_range);
  f.dssd_max = r.num("dssd_max", f.dssd_max);
  f.response_range = r.num("response_range", f.response_range);
  f.car_following_overrides = read_overrides(r, "car_following_overrides");
  f.lcn_overrides = read_overrides(r, "lcn_overrides");
  f.lco_overrides = read_overrides(r, "lco_overrides");
  r.done();
}

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

std::string content_hash(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // The reported byte is one past the offending character.
    const auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string msg = e.what();
    if (const auto p = msg.find("syntax error"); p != std::string::npos) msg = msg.substr(p);
    throw ParseError((origin.empty() ? std::string() : origin + ":") + std::to_string(line) + ":" +
                         std::to_string(col) + ": " + msg,
                     line, col);
  }
  Scenario s;
  s.source = origin;
  s.hash = content_hash(text);
  Reader root(j, "");
  s.version = root.req_str("version");
  if (s.version != kSchemaVersion)
    fail("version", "unsupported version '" + s.version + "' (expected '" + kSchemaVersion + "')");
  s.name = root.str("name", "");
  s.description = root.str("description", "");

  auto& setup = s.setup;
  auto& p = setup.params;
  double start = 0.0, duration = 3600.0;
  if (root.has("simulation")) {
    Reader r = root.obj("simulation");
    p.dt = r.num("dt", p.dt);
    start = r.num("start", start);
    duration = r.num("duration", duration);
    s.seed_defaulted = !r.has("seed");
    p.seed = r.u64("seed", kDefaultSeed);
    p.warmup = r.num("warmup", p.warmup);
    p.queue_sample_period = r.num("queue_sample_period", p.queue_sample_period);
    p.stop_speed = r.num("stop_speed", p.stop_speed);
    p.lc_lockout = r.num("lc_lockout", p.lc_lockout);
    p.emergency_decel = r.num("emergency_decel", p.emergency_decel);
    p.min_safety_gap = r.num("min_safety_gap", p.min_safety_gap);
    p.pedestrian_speed = r.num("pedestrian_speed", p.pedestrian_speed);
    p.max_box_wait = r.num("max_box_wait", p.max_box_wait);
    p.lookahead = r.num("lookahead", p.lookahead);
    p.record_events = r.boolean("record_events", p.record_events);
    r.done();
  } else {
    s.seed_defaulted = true;
    p.seed = kDefaultSeed;
  }

  root.need("network");
  setup.network = read_network(root.obj("network"));
  root.need("plan");
  setup.plan = read_plan(root.obj("plan"), setup.network, s.plan_ref);
  root.need("demand");
  setup.demand = read_demand(root.obj("demand"), start, duration);

  if (root.has("drivers")) {
    Reader r = root.obj("drivers");
    if (r.has("motor")) read_class(r.obj("motor"), setup.motor);
    if (r.has("non_motor")) read_class(r.obj("non_motor"), setup.non_motor);
    r.done();
  }
  if (root.has("fuzzy")) {
    Reader r = root.obj("fuzzy");
    if (r.has("motor")) read_fuzzy(r.obj("motor"), setup.motor.fuzzy);
    if (r.has("non_motor")) read_fuzzy(r.obj("non_motor"), setup.non_motor.fuzzy);
    r.done();
  }
  if (root.has("moe")) {
    Reader r = root.obj("moe");
    s.moe_interval = r.num("interval", s.moe_interval);
    r.done();
  }
  s.assess.seed = p.seed;
  if (root.has("assessment")) {
    Reader r = root.obj("assessment");
    s.assess.window = r.num("window", s.assess.window);
    s.assess.warmup = r.num("warmup", s.assess.warmup);
    auto& t = s.assess.thresholds;
    t.volume_threshold = r.num("volume_threshold", t.volume_threshold);
    t.speed_threshold = r.num("speed_threshold", t.speed_threshold);
    t.volume_eps = r.num("volume_eps", t.volume_eps);
    t.speed_eps = r.num("speed_eps", t.speed_eps);
    s.detectors = r.str("detectors", "");
    r.done();
  }
  root.done();

  std::vector<std::string> bad;
  if (!(s.moe_interval > 0)) bad.push_back("moe.interval must be > 0");
  if (!(s.assess.window > 0)) bad.push_back("assessment.window must be > 0");
  if (!(s.assess.warmup >= 0)) bad.push_back("assessment.warmup must be >= 0");
  for (double v : {s.assess.thresholds.volume_threshold, s.assess.thresholds.speed_threshold})
    if (!(v >= 0)) bad.push_back("assessment thresholds must be >= 0");
  for (double v : {s.assess.thresholds.volume_eps, s.assess.thresholds.speed_eps})
    if (!(v > 0)) bad.push_back("assessment epsilons must be > 0");
  if (!(duration > 0)) bad.push_back("simulation.duration must be > 0");
  if (!(p.warmup < duration)) bad.push_back("simulation.warmup must be shorter than the duration");
  for (const auto& v : net::validate_network(setup.network)) bad.push_back("network: " + v);
  for (const auto& v : signal::validate_plan(setup.plan, setup.network)) bad.push_back("plan: " + v);
  for (const auto& v : setup.demand.validate(setup.network)) bad.push_back("demand: " + v);
  if (!bad.empty()) throw ValidationError(bad);
  // Remaining checks (driver ranges, rule overrides, engine params).
  try {
    sim::Model check(setup);
  } catch (const ValidationError&) {
    throw;
  } catch (const InputError& e) {
    throw ValidationError({e.what()});
  }
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read scenario '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  Scenario s = parse_scenario(ss.str(), path);
  if (!s.detectors.empty() && std::filesystem::path(s.detectors).is_relative())
    s.detectors = (std::filesystem::path(path).parent_path() / s.detectors).lexically_normal().string();
  return s;
}

Scenario with_builtin_plan(const Scenario& s, const std::string& plan) {
  if (plan != "plan1" && plan != "plan2" && plan != "plan3")
    throw InputError("unknown plan '" + plan + "' (expected plan1, plan2 or plan3)");
  Scenario out = s;
  out.plan_ref = plan;
  out.setup.plan = signal::builtin_plan(plan, s.setup.network, {}, s.setup.plan.intergreen);
  return out;
}

std::string manifest_json(const Scenario& s, std::uint64_t seed, const std::string& command) {
  json m;
  m["tool"] = "fuzzsim";
  m["tool_version"] = FUZZSIM_VERSION;
  m["schema_version"] = s.version;
  m["command"] = command;
  m["scenario"] = s.name;
  m["scenario_source"] = s.source;
  m["scenario_hash"] = s.hash;
  m["plan"] = s.plan_ref == "inline" ? s.setup.plan.name : s.plan_ref;
  m["seed"] = seed;
  m["seed_defaulted"] = s.seed_defaulted;
  m["dt"] = s.setup.params.dt;
  m["start"] = s.setup.demand.start;
  m["duration"] = s.setup.demand.end - s.setup.demand.start;
  m["warmup"] = s.setup.params.warmup;
  m["moe_interval"] = s.moe_interval;
  return m.dump(2) + "\n";
}

}  // namespace fuzzsim::scenario
