#include "fuzzsim/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <ostream>
#include <sstream>

#include "fuzzsim/errors.hpp"

namespace fuzzsim::sim {

using driver::DriverParams;
using driver::kNoVehicle;
using net::StreamClass;
using signal::Indication;

// --- configuration ---------------------------------------------------------

double TruncatedNormal::sample(std::mt19937_64& rng) const {
  if (sd <= 0.0 || lo >= hi) return std::clamp(mean, lo, hi);
  std::normal_distribution<double> n(mean, sd);
  for (int i = 0; i < 64; ++i) {
    const double x = n(rng);
    if (x >= lo && x <= hi) return x;
  }
  return std::clamp(mean, lo, hi);
}

void TruncatedNormal::validate(const std::string& what) const {
  if (!std::isfinite(mean) || !std::isfinite(sd) || !std::isfinite(lo) || !std::isfinite(hi))
    throw InputError(what + ": non-finite distribution parameter");
  if (sd < 0) throw InputError(what + ": sd must be >= 0");
  if (lo > hi) throw InputError(what + ": lower bound above upper bound");
  if (mean < lo || mean > hi) throw InputError(what + ": mean outside its bounds");
}

DriverParams DriverDistribution::sample(std::mt19937_64& rng) const {
  DriverParams p;
  p.desired_speed = desired_speed.sample(rng);
  p.desired_time_headway = desired_time_headway.sample(rng);
  p.standstill_gap = standstill_gap.sample(rng);
  p.max_accel = max_accel.sample(rng);
  p.max_decel = std::max(max_decel.sample(rng), p.max_accel);
  p.decision_period = decision_period;
  p.lc_intention_threshold = lc_intention_threshold;
  return p;
}

void DriverDistribution::validate() const {
  desired_speed.validate("desired_speed");
  desired_time_headway.validate("desired_time_headway");
  standstill_gap.validate("standstill_gap");
  max_accel.validate("max_accel");
  max_decel.validate("max_decel");
  DriverParams lo;
  lo.desired_speed = desired_speed.lo;
  lo.desired_time_headway = desired_time_headway.lo;
  lo.standstill_gap = standstill_gap.lo;
  lo.max_accel = max_accel.lo;
  lo.max_decel = std::max(max_decel.lo, max_accel.hi);
  lo.decision_period = decision_period;
  lo.lc_intention_threshold = lc_intention_threshold;
  lo.validate();
}

DriverDistribution DriverDistribution::motor_default() {
  DriverDistribution d;
  d.desired_speed = {13.9, 1.5, 10.0, 16.7};
  d.desired_time_headway = {1.5, 0.2, 1.0, 2.5};
  d.standstill_gap = {2.0, 0.3, 1.5, 3.0};
  d.max_accel = {2.0, 0.3, 1.2, 3.0};
  d.max_decel = TruncatedNormal::fixed(3.5);
  return d;
}

DriverDistribution DriverDistribution::non_motor_default() {
  DriverDistribution d;
  d.desired_speed = {4.5, 0.8, 3.0, 6.5};
  d.desired_time_headway = {1.0, 0.15, 0.7, 1.6};
  d.standstill_gap = {1.0, 0.2, 0.6, 1.5};
  d.max_accel = {1.0, 0.15, 0.6, 1.5};
  d.max_decel = TruncatedNormal::fixed(2.5);
  return d;
}

ClassSetup ClassSetup::motor_default() {
  return {DriverDistribution::motor_default(), driver::FuzzyConfig::motor_default(), 4.5, 4.0};
}

ClassSetup ClassSetup::non_motor_default() {
  return {DriverDistribution::non_motor_default(), driver::FuzzyConfig::non_motor_default(), 1.8, 3.0};
}

double DemandProfile::rate(const DemandStream& s, double t) const noexcept {
  if (s.rates.empty() || t < start || t >= end) return 0.0;
  const auto k = std::size_t(std::max(0.0, std::floor((t - start) / interval)));
  return s.rates[std::min(k, s.rates.size() - 1)];
}

std::vector<std::string> DemandProfile::validate(const net::Network& net) const {
  std::vector<std::string> bad;
  if (!std::isfinite(start) || !std::isfinite(end) || !(end > start)) bad.push_back("demand period must have end > start");
  if (!(interval > 0)) bad.push_back("demand interval must be > 0");
  for (const auto& s : streams) {
    const int m = net.find_movement(s.movement);
    if (m < 0) {
      bad.push_back("demand references unknown movement '" + s.movement + "'");
      continue;
    }
    if (net.movements[std::size_t(m)].cls != s.cls)
      bad.push_back("demand class for '" + s.movement + "' does not match the movement");
    if (s.rates.empty()) bad.push_back("demand for '" + s.movement + "' has no rates");
    for (double r : s.rates)
      if (!(r >= 0) || !std::isfinite(r)) bad.push_back("demand rate for '" + s.movement + "' must be >= 0");
  }
  return bad;
}

void SimParams::validate() const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0) || !std::isfinite(v)) throw InputError(std::string(what) + " must be > 0");
  };
  positive(dt, "dt");
  positive(queue_sample_period, "queue_sample_period");
  positive(stop_speed, "stop_speed");
  positive(emergency_decel, "emergency_decel");
  positive(pedestrian_speed, "pedestrian_speed");
  positive(max_box_wait, "max_box_wait");
  positive(lookahead, "lookahead");
  if (!(lc_lockout >= 0)) throw InputError("lc_lockout must be >= 0");
  if (!(min_safety_gap >= 0)) throw InputError("min_safety_gap must be >= 0");
  if (!(warmup >= 0)) throw InputError("warmup must be >= 0");
}

const char* to_string(LeaderKind k) noexcept {
  switch (k) {
    case LeaderKind::none: return "none";
    case LeaderKind::vehicle: return "vehicle";
    case LeaderKind::stop_line: return "stop_line";
    case LeaderKind::conflict_point: return "conflict_point";
    case LeaderKind::merge: return "merge";
  }
  return "?";
}

void write_event(std::ostream& os, const Event& e) {
  os << e.t << '\t' << e.vehicle << '\t' << e.type << '\t' << e.where << '\n';
}

// --- topology --------------------------------------------------------------

struct Model::Topology {
  enum class Kind { approach, box, exit };

  struct Track {
    Kind kind = Kind::approach;
    int link = -1;
    int lane = -1;
    int movement = -1;
    int path = -1;
    double length = 0.0;
    double speed_limit = 0.0;
    int exit_track = -1;          // box: lane track it feeds
    std::vector<int> successors;  // approach lane: box tracks leaving it
    std::vector<int> feeders;     // exit lane: box tracks ending on it
    std::string name;
  };

  // Another stream merging into the same exit lane.
  struct Merge {
    int other = -1;
    int other_path = 0;
    bool self_yields = false;
  };

  std::vector<Track> tracks;
  std::vector<std::vector<int>> lane_track;  // [link][lane]
  std::vector<std::vector<int>> box_track;   // [movement][path]
  std::vector<std::vector<net::OrientedConflict>> conflicts;
  std::vector<std::vector<std::vector<Merge>>> merges;  // [movement][path]
  std::vector<double> half_width;                       // per movement
  std::vector<int> approach_links;
  // Twice-crossing legs per movement and entry lane.
  std::vector<std::vector<std::vector<Leg>>> twice;
  std::vector<int> track_order;  // downstream first
};

namespace {

double stream_half_width(StreamClass c) {
  switch (c) {
    case StreamClass::motor: return 1.5;
    case StreamClass::non_motor: return 1.0;
    case StreamClass::pedestrian: return 2.0;
  }
  return 1.5;
}

VehicleClass to_vehicle_class(StreamClass c) {
  return c == StreamClass::motor ? VehicleClass::motor : VehicleClass::non_motor;
}

}  // namespace

Model::Model(Setup setup) : setup_(std::move(setup)), motor_(setup_.motor.fuzzy), non_motor_(setup_.non_motor.fuzzy) {
  const auto& net = setup_.network;
  std::vector<std::string> bad = validate_network(net);
  for (auto& v : setup_.demand.validate(net)) bad.push_back(std::move(v));
  for (auto& v : signal::validate_plan(setup_.plan, net)) bad.push_back(std::move(v));
  if (!(setup_.params.warmup < setup_.demand.end - setup_.demand.start)) bad.push_back("warm-up must be shorter than the run");
  if (!bad.empty()) throw ValidationError(bad);
  setup_.params.validate();
  setup_.motor.drivers.validate();
  setup_.non_motor.drivers.validate();
  for (const ClassSetup* c : {&setup_.motor, &setup_.non_motor}) {
    if (!(c->length > 0)) throw InputError("vehicle length must be > 0");
    if (!(c->critical_gap >= 0)) throw InputError("critical gap must be >= 0");
  }
  plan_ = signal::CompiledPlan(setup_.plan, net);

  topo_ = std::make_unique<Topology>();
  auto& t = *topo_;
  using Kind = Topology::Kind;
  t.lane_track.resize(net.links.size());
  for (std::size_t l = 0; l < net.links.size(); ++l) {
    const auto& link = net.links[l];
    if (link.role == net::LinkRole::approach) t.approach_links.push_back(int(l));
    for (const auto& lane : link.lanes) {
      Topology::Track tr;
      tr.kind = link.role == net::LinkRole::approach ? Kind::approach : Kind::exit;
      tr.link = int(l);
      tr.lane = lane.index;
      tr.length = link.length;
      tr.speed_limit = link.speed_limit;
      tr.name = link.id + "/" + std::to_string(lane.index);
      t.lane_track[l].push_back(int(t.tracks.size()));
      t.tracks.push_back(tr);
    }
  }
  t.box_track.resize(net.movements.size());
  t.half_width.resize(net.movements.size());
  for (std::size_t m = 0; m < net.movements.size(); ++m) {
    const auto& mv = net.movements[m];
    t.half_width[m] = stream_half_width(mv.cls);
    if (mv.cls == StreamClass::pedestrian) continue;
    const auto& from = net.links[std::size_t(mv.from_link)];
    for (std::size_t p = 0; p < mv.paths.size(); ++p) {
      const auto& lp = mv.paths[p];
      Topology::Track tr;
      tr.kind = Kind::box;
      tr.movement = int(m);
      tr.path = int(p);
      tr.length = lp.path.length();
      tr.speed_limit = from.speed_limit;
      tr.exit_track = t.lane_track[std::size_t(mv.to_link)][std::size_t(lp.to_lane)];
      tr.name = mv.id + "#" + std::to_string(p);
      const int id = int(t.tracks.size());
      t.box_track[m].push_back(id);
      t.tracks.push_back(tr);
      t.tracks[std::size_t(t.lane_track[std::size_t(mv.from_link)][std::size_t(lp.from_lane)])].successors.push_back(id);
      t.tracks[std::size_t(tr.exit_track)].feeders.push_back(id);
    }
  }

  t.conflicts.resize(net.movements.size());
  for (std::size_t m = 0; m < net.movements.size(); ++m) {
    t.conflicts[m] = net::conflicting_movements(net, int(m));
    std::sort(t.conflicts[m].begin(), t.conflicts[m].end(),
              [](const auto& a, const auto& b) { return a.self_dist < b.self_dist; });
  }

  // Merge partners share an exit lane; the priority order matches conflict points.
  t.merges.resize(net.movements.size());
  for (std::size_t m = 0; m < net.movements.size(); ++m) {
    const auto& mv = net.movements[m];
    t.merges[m].resize(mv.paths.size());
    if (mv.cls == StreamClass::pedestrian) continue;
    for (std::size_t p = 0; p < mv.paths.size(); ++p) {
      const int exit = t.tracks[std::size_t(t.box_track[m][p])].exit_track;
      for (std::size_t o = 0; o < net.movements.size(); ++o) {
        if (o == m || net.movements[o].cls == StreamClass::pedestrian) continue;
        for (std::size_t q = 0; q < net.movements[o].paths.size(); ++q) {
          if (t.tracks[std::size_t(t.box_track[o][q])].exit_track != exit) continue;
          // Same priority rule as crossings: throughs before rights before lefts.
          auto key = [&](std::size_t i) {
            const auto& x = net.movements[i];
            const int k = x.turn == net::Turn::through ? 1 : x.turn == net::Turn::right ? 2 : 3;
            return std::make_tuple(k, x.cls == StreamClass::motor ? 1 : 0, int(i));
          };
          t.merges[m][p].push_back({int(o), int(q), key(m) > key(o)});
        }
      }
    }
  }

  t.twice.resize(net.movements.size());
  for (std::size_t m = 0; m < net.movements.size(); ++m) {
    if (!plan_.twice_crossing(int(m))) continue;
    const auto& mv = net.movements[m];
    const auto side = net.links[std::size_t(mv.from_link)].side;
    const auto to = net::exit_side(side, net::Turn::left);
    const int first = net.movement_index(net::movement_id(side, net::Turn::through, StreamClass::non_motor));
    const int second = net.movement_index(
        net::movement_id(net::Side((int(to) + 2) % 4), net::Turn::through, StreamClass::non_motor));
    const auto& link = net.links[std::size_t(mv.from_link)];
    t.twice[m].resize(link.lanes.size());
    for (int lane : mv.from_lanes) {
      const int p1 = net.movements[std::size_t(first)].path_for_lane(lane);
      if (p1 < 0) throw InputError("twice crossing of '" + mv.id + "' has no first crossing from lane " + std::to_string(lane));
      const net::OrientedConflict* hit = nullptr;
      for (const auto& c : t.conflicts[std::size_t(first)])
        if (c.other == second && c.self_path == p1 && (!hit || c.other_path < hit->other_path)) hit = &c;
      if (!hit) throw InputError("twice crossing of '" + mv.id + "': crossings do not meet");
      const double len2 = net.movements[std::size_t(second)].paths[std::size_t(hit->other_path)].path.length();
      t.twice[m][std::size_t(lane)] = {Leg{first, p1, 0.0, hit->self_dist},
                                       Leg{second, hit->other_path, hit->other_dist, len2}};
    }
  }

  for (Kind k : {Kind::exit, Kind::box, Kind::approach})
    for (std::size_t i = 0; i < t.tracks.size(); ++i)
      if (t.tracks[i].kind == k) t.track_order.push_back(int(i));
}

Model::~Model() = default;

// --- world -----------------------------------------------------------------

namespace {

struct Crossing {
  double start = 0.0;
  bool forward = true;
};

struct PedStream {
  int movement = -1;
  double length = 0.0;
  int waiting = 0;
  std::vector<Crossing> crossings;
};

struct Buffered {
  long id = 0;
};

struct Candidate {
  LeaderKind kind = LeaderKind::none;
  double gap = kNoVehicle;
  double speed = 0.0;
  long vehicle = -1;
};

}  // namespace

struct World::Impl {
  using Kind = Model::Topology::Kind;

  const Model& model;
  const Model::Topology& topo;
  const SimParams& params;
  std::mt19937_64 rng;
  std::vector<Vehicle> vehicles;               // indexed by id
  std::vector<std::vector<long>> on_track;     // front first
  std::vector<std::deque<long>> buffers;       // per (approach link, class)
  std::deque<long> waiting;                    // twice-crossing waiting area
  std::vector<PedStream> peds;
  std::vector<Indication> ind;                 // per movement, this step
  std::vector<double> green_left;              // per movement, this step
  std::vector<std::size_t> stream_buffer;      // demand stream -> buffer
  std::vector<char> red_crossed;               // per vehicle
  // Stop decision at the end of green, held until the vehicle may go again:
  // 0 free, 1 stop, 2 too close to stop. Only the stepping pass updates it.
  mutable std::vector<signed char> stop_latch;
  bool stepping = false;
  long step_index = 0;

  Impl(const Model& m, std::uint64_t seed)
      : model(m), topo(m.topology()), params(m.setup().params), rng(seed) {
    on_track.resize(topo.tracks.size());
    buffers.resize(m.network().links.size() * 2);
    const auto& net = m.network();
    for (std::size_t i = 0; i < net.movements.size(); ++i)
      if (net.movements[i].cls == StreamClass::pedestrian)
        peds.push_back({int(i), net.movements[i].paths.front().path.length(), 0, {}});
    ind.assign(net.movements.size(), Indication::red);
    green_left.assign(net.movements.size(), 0.0);
  }

  const Model::Topology::Track& track(int i) const { return topo.tracks[std::size_t(i)]; }
  Vehicle& veh(long id) { return vehicles[std::size_t(id)]; }
  const Vehicle& veh(long id) const { return vehicles[std::size_t(id)]; }
  const driver::BehaviorModels& behavior(const Vehicle& v) const { return model.behavior(v.cls); }

  double vmax(const Vehicle& v) const {
    const double lim = v.track >= 0 ? track(v.track).speed_limit : v.driver.desired_speed;
    return std::min(v.driver.desired_speed, lim);
  }

  int route_box_track(const Vehicle& v, int leg) const {
    const auto& l = v.legs[std::size_t(leg)];
    return topo.box_track[std::size_t(l.movement)][std::size_t(l.path)];
  }

  int index_on_track(const Vehicle& v) const {
    const auto& list = on_track[std::size_t(v.track)];
    for (std::size_t i = 0; i < list.size(); ++i)
      if (list[i] == v.id) return int(i);
    return -1;
  }

  // Where the vehicle's current track ends for it: a leg that ends at a
  // waiting area stops short of the track end.
  double track_end(const Vehicle& v) const {
    const auto& tr = track(v.track);
    if (tr.kind == Kind::box) return v.legs[std::size_t(v.leg)].to;
    return tr.length;
  }

  // Next track on the route after the current one, with the entry offset.
  std::pair<int, double> next_track(const Vehicle& v, int track_id, int leg) const {
    const auto& tr = track(track_id);
    if (tr.kind == Kind::approach) return {route_box_track(v, leg), v.legs[std::size_t(leg)].from};
    if (tr.kind == Kind::box) {
      const auto& l = v.legs[std::size_t(leg)];
      if (leg + 1 < int(v.legs.size())) return {-1, 0.0};  // waiting area
      if (l.to < tr.length - 1e-9) return {-1, 0.0};
      return {tr.exit_track, 0.0};
    }
    return {-1, 0.0};
  }

  static double time_to_cover(double d, double v0, double a, double vmax) {
    if (d <= 0) return 0.0;
    v0 = std::min(v0, vmax);
    if (a <= 0) return v0 > 1e-6 ? d / v0 : kNoVehicle;
    const double t_acc = (vmax - v0) / a;
    const double d_acc = v0 * t_acc + 0.5 * a * t_acc * t_acc;
    if (d <= d_acc) return (-v0 + std::sqrt(v0 * v0 + 2 * a * d)) / a;
    return t_acc + (d - d_acc) / vmax;
  }

  // Whether the front crosses the line within the remaining green steps
  // while holding acceleration a.
  bool reaches_line(const Vehicle& v, double d, double green, double a) const {
    const double top = vmax(v);
    double speed = v.speed;
    double x = 0.0;
    for (double t = 0.0; t < green - 1e-9; t += params.dt) {
      speed = std::clamp(speed + a * params.dt, 0.0, top);
      x += speed * params.dt;
      if (x >= d) return true;
      if (speed <= 0.0) return false;
    }
    return false;
  }

  double stop_distance(double v) const {
    const double D = params.emergency_decel;
    return v * v / (2 * D) + v * params.dt / 2;
  }

  // Acceleration imposed by one obstacle ahead.
  double constraint_accel(const Vehicle& v, double gap, double lead_speed, bool vehicle_ahead = false) const {
    const auto& p = v.driver;
    const double desired = driver::compute_desired_gap(p, v.speed);
    const double relevance = 2.0 * desired + v.speed * v.speed / (2.0 * p.max_decel) + p.standstill_gap;
    const double D = params.emergency_decel;
    const double dt = params.dt;
    const double g = std::max(0.0, gap);
    // Queued vehicles keep their standstill spacing; fixed obstacles a margin.
    const double keep = vehicle_ahead ? std::max(params.min_safety_gap, 0.5 * p.standstill_gap) : params.min_safety_gap;
    const double room = std::max(0.0, g - keep);
    const double v_safe = -D * dt + std::sqrt(D * D * dt * dt + 2 * D * room + lead_speed * lead_speed);
    double a_safe = (v_safe - v.speed) / dt;
    // Fixed obstacles: brake at the constant rate that stops at the margin
    // once that rate is no longer negligible.
    if (!vehicle_ahead && lead_speed <= 0.0) {
      const double b = v.speed * v.speed / (2.0 * std::max(room, 0.1));
      if (b >= 0.5 * p.max_decel) a_safe = std::min(a_safe, -b);
    }
    if (gap > relevance) return a_safe;
    const double a_fuzzy = driver::following_acceleration(behavior(v).car_following,
                                                          driver::compute_dv(lead_speed, v.speed),
                                                          driver::compute_dssd(g, desired), p);
    return std::min(a_fuzzy, a_safe);
  }

  // Position of the front along the current leg's path (negative upstream
  // of the stop line); NaN on exit lanes.
  double path_position(const Vehicle& v) const {
    const auto& tr = track(v.track);
    if (tr.kind == Kind::approach) return v.position - tr.length;
    if (tr.kind == Kind::box) return v.position;
    return std::nan("");
  }

  bool pedestrians_in_zone(int movement, double dist, double half, double within) const {
    const double t = model_clock();
    for (const auto& ps : peds) {
      if (ps.movement != movement) continue;
      const double speed = params.pedestrian_speed;
      for (const auto& c : ps.crossings) {
        // Pedestrian group position along the crosswalk now and `within` s later.
        const double s_now = speed * (t - c.start);
        const double s_later = s_now + speed * within;
        const double lo = c.forward ? dist - half : ps.length - dist - half;
        const double hi = c.forward ? dist + half : ps.length - dist + half;
        if (s_later >= lo && s_now <= hi) return true;
      }
    }
    return false;
  }

  double clock = 0.0;
  double model_clock() const { return clock; }

  void set_clock(double t) {
    clock = t;
    const auto& plan = model.plan();
    for (std::size_t m = 0; m < ind.size(); ++m) {
      ind[m] = plan.indication(int(m), t);
      green_left[m] = plan.green_remaining(int(m), t);
    }
  }

  // A vehicle standing in the zone and itself held up does not block an
  // older vehicle, so circular waits in the box resolve oldest first.
  bool zone_occupied(const Vehicle& v, int other, int other_path, double other_dist, double half) const {
    const auto& mv = model.network().movements[std::size_t(other)];
    if (mv.cls == StreamClass::pedestrian) return pedestrians_in_zone(other, other_dist, half, 0.0);
    const int tr = topo.box_track[std::size_t(other)][std::size_t(other_path)];
    for (long id : on_track[std::size_t(tr)]) {
      const auto& u = veh(id);
      if (u.position < other_dist - half || u.position - u.length > other_dist + half) continue;
      if (u.speed < 0.1 && u.box_wait > 0 && v.id < u.id) continue;
      return true;
    }
    return false;
  }

  bool must_yield(int self, int other, bool self_yields) const {
    const Indication s = ind[std::size_t(self)];
    if (s != Indication::permissive_green) return false;
    const Indication o = ind[std::size_t(other)];
    if (o == Indication::permissive_green) return self_yields;
    return true;  // protected streams, and red streams still clearing the box
  }

  // Time-based acceptance against every vehicle heading for the point.
  bool gap_ok(const Vehicle& v, double clear_time, int other, int other_path, double other_dist, double half) const {
    const auto& net = model.network();
    const auto& mv = net.movements[std::size_t(other)];
    const double tau = model.class_setup(v.cls).critical_gap;
    if (mv.cls == StreamClass::pedestrian) return !pedestrians_in_zone(other, other_dist, half, clear_time + 1.0);
    // Vehicles standing in a queue are not treated as approaching.
    auto arrives_too_soon = [&](const Vehicle& u, double d) {
      if (d <= 0) return true;
      if (u.speed < params.stop_speed) return false;
      const double t_u = time_to_cover(d, u.speed, u.driver.max_accel, vmax(u));
      return t_u <= clear_time + tau;
    };
    const int box = topo.box_track[std::size_t(other)][std::size_t(other_path)];
    for (long id : on_track[std::size_t(box)]) {
      const auto& u = veh(id);
      if (u.position - u.length > other_dist + half) continue;  // receding
      if (u.position >= other_dist - half) return false;         // in the zone
      if (u.speed < 0.1 && u.box_wait > 0) continue;             // itself yielding
      if (arrives_too_soon(u, other_dist - half - u.position)) return false;
    }
    if (ind[std::size_t(other)] == Indication::red) return true;
    const int from_lane = mv.paths[std::size_t(other_path)].from_lane;
    const int lane = topo.lane_track[std::size_t(mv.from_link)][std::size_t(from_lane)];
    const double len = track(lane).length;
    for (long id : on_track[std::size_t(lane)]) {
      const auto& u = veh(id);
      const auto& l = u.legs[std::size_t(u.leg)];
      if (l.movement != other || l.path != other_path) continue;
      const double d = (len - u.position) + other_dist - half;
      if (d > params.lookahead) break;
      if (arrives_too_soon(u, d)) return false;
    }
    return true;
  }

  double clear_time(const Vehicle& v, double distance) const {
    return time_to_cover(distance, v.speed, v.driver.max_accel, vmax(v));
  }

  void collect(const Vehicle& v, std::vector<Candidate>& out) const {
    out.clear();
    const auto& tr = track(v.track);
    const auto& list = on_track[std::size_t(v.track)];
    const int idx = index_on_track(v);

    // Vehicle ahead along the route, across at most two track boundaries.
    if (idx > 0) {
      const auto& u = veh(list[std::size_t(idx - 1)]);
      out.push_back({LeaderKind::vehicle, u.position - u.length - v.position, u.speed, u.id});
    } else {
      double acc = track_end(v) - v.position;
      int cur = v.track;
      int leg = v.leg;
      for (int hop = 0; hop < 3 && acc < params.lookahead; ++hop) {
        const auto [nxt, offset] = next_track(v, cur, leg);
        if (nxt < 0) break;
        const auto& nl = on_track[std::size_t(nxt)];
        // Rearmost vehicle on the next track past the entry offset.
        const Vehicle* rear = nullptr;
        for (auto it = nl.rbegin(); it != nl.rend(); ++it) {
          const auto& u = veh(*it);
          if (u.position >= offset) {
            rear = &u;
            break;
          }
        }
        if (rear) {
          out.push_back({LeaderKind::vehicle, acc + rear->position - rear->length - offset, rear->speed, rear->id});
          break;
        }
        acc += track(nxt).length - offset;
        if (track(cur).kind == Kind::box) break;
        cur = nxt;
      }
      // Tails of vehicles that left the lane on another path.
      if (tr.kind == Kind::approach) {
        const int mine = route_box_track(v, v.leg);
        for (int s : tr.successors) {
          if (s == mine || on_track[std::size_t(s)].empty()) continue;
          const auto& u = veh(on_track[std::size_t(s)].back());
          if (u.position - u.length < 0)
            out.push_back({LeaderKind::vehicle, tr.length - v.position + u.position - u.length, u.speed, u.id});
        }
      }
    }

    if (tr.kind == Kind::exit) return;
    const double s = path_position(v);
    const auto& leg = v.legs[std::size_t(v.leg)];
    const int m = leg.movement;
    const bool forced = v.box_wait > params.max_box_wait;

    // Merge with box vehicles bound for the same exit lane.
    const bool last_leg = v.leg + 1 == int(v.legs.size());
    const int mine_box = route_box_track(v, v.leg);
    const auto& box = track(mine_box);
    if (last_leg) {
      const double rem = box.length - s;
      if (rem < 45.0) {
        const Vehicle* best = nullptr;
        double best_rem = -1.0;
        for (int f : track(box.exit_track).feeders) {
          if (f == mine_box) continue;
          const double flen = track(f).length;
          for (long id : on_track[std::size_t(f)]) {
            const auto& u = veh(id);
            const double ru = flen - u.position;
            const bool ahead = ru < rem || (ru == rem && u.id < v.id);
            if (ahead && ru > best_rem) {
              best_rem = ru;
              best = &u;
            }
          }
        }
        if (best) out.push_back({LeaderKind::merge, rem - best_rem - best->length, best->speed, best->id});
      }
    }

    if (forced) return;

    // Conflict points ahead on the current leg.
    const double lookahead_cp = 60.0;
    double block_at = kNoVehicle;  // yield point of the first rejected gap
    const bool permissive = ind[std::size_t(m)] == Indication::permissive_green;
    const double self_half = topo.half_width[std::size_t(m)];
    for (const auto& oc : topo.conflicts[std::size_t(m)]) {
      if (oc.self_path != leg.path) continue;
      if (oc.self_dist < leg.from || oc.self_dist > leg.to) continue;
      if (oc.self_dist - s > lookahead_cp) break;
      const double half = topo.half_width[std::size_t(oc.other)];
      const double y = oc.self_dist - half - 0.5;
      if (s - v.length > oc.self_dist + half) continue;  // cleared
      if (s > y) continue;                                  // committed
      if (zone_occupied(v, oc.other, oc.other_path, oc.other_dist, self_half + 0.5)) {
        out.push_back({LeaderKind::conflict_point, y - s, 0.0, -1});
        continue;
      }
      if (permissive && std::isinf(block_at) && must_yield(m, oc.other, oc.self_yields)) {
        const double t_clear = clear_time(v, oc.self_dist + half + v.length - s);
        if (!gap_ok(v, t_clear, oc.other, oc.other_path, oc.other_dist, self_half)) block_at = y;
      }
    }
    // Merging into a lane fed by a priority stream.
    if (permissive && last_leg && s <= 0.0) {
      for (const auto& mg : topo.merges[std::size_t(m)][std::size_t(leg.path)]) {
        if (!mg.self_yields || !must_yield(m, mg.other, mg.self_yields)) continue;
        const double olen = model.network().movements[std::size_t(mg.other)].paths[std::size_t(mg.other_path)].path.length();
        const double t_clear = clear_time(v, box.length - s + v.length);
        if (!gap_ok(v, t_clear, mg.other, mg.other_path, olen, 0.0)) {
          block_at = -0.5;
          break;
        }
      }
    }
    if (std::isfinite(block_at)) out.push_back({LeaderKind::conflict_point, block_at - s, 0.0, -1});
    if (tr.kind == Kind::approach) signal_candidate(v, m, out);
  }

  // Stop line: stop for red, or when the line cannot be reached a step
  // before the green ends at the acceleration every other obstacle allows.
  void signal_candidate(const Vehicle& v, int m, std::vector<Candidate>& out) const {
    const double d = track(v.track).length - v.position;
    bool stop = ind[std::size_t(m)] == Indication::red;
    if (!stop && std::isfinite(green_left[std::size_t(m)]))
      stop = !reaches_line(v, d, green_left[std::size_t(m)] - params.dt, accel_from(v, out, nullptr));
    signed char latch = stop_latch[std::size_t(v.id)];
    const bool can_stop = stop_distance(v.speed) <= d || v.speed < 0.5;
    if (!stop) {
      latch = can_stop ? 0 : 2;
    } else if (latch != 1) {
      latch = can_stop ? 1 : 2;
    }
    if (stepping) stop_latch[std::size_t(v.id)] = latch;
    if (latch == 1) out.push_back({LeaderKind::stop_line, d, 0.0, -1});
  }

  // Keep obstacles the vehicle can still stop for; a conflict point it can
  // no longer stop before is passed.
  double accel_from(const Vehicle& v, const std::vector<Candidate>& cands, Leader* chosen) const {
    DriverParams free = v.driver;
    free.desired_speed = vmax(v);
    double a = driver::free_acceleration(free, v.speed);
    Leader best;
    best.accel = a;
    for (const auto& c : cands) {
      if (c.kind == LeaderKind::conflict_point && stop_distance(v.speed) > c.gap + params.min_safety_gap) continue;
      const double ac = constraint_accel(v, c.gap, c.speed, c.vehicle >= 0);
      if (ac < a) {
        a = ac;
        best = {c.kind, c.gap, c.speed, c.vehicle, ac};
      }
    }
    if (chosen) *chosen = best;
    return a;
  }

  double acceleration(const Vehicle& v, std::vector<Candidate>& cands, Leader* chosen) const {
    collect(v, cands);
    return accel_from(v, cands, chosen);
  }

};

World::World(std::shared_ptr<const Model> model, std::uint64_t seed)
    : model_(std::move(model)), impl_(std::make_unique<Impl>(*model_, seed)) {
  clock_ = model_->setup().demand.start;
  impl_->set_clock(clock_);
}

World::~World() = default;
World::World(World&&) noexcept = default;
World& World::operator=(World&&) noexcept = default;

double World::end() const noexcept { return model_->setup().demand.end; }

const Vehicle& World::vehicle(long id) const {
  if (id < 0 || id >= long(impl_->vehicles.size())) throw InputError("unknown vehicle id " + std::to_string(id));
  return impl_->vehicles[std::size_t(id)];
}

std::vector<long> World::active_ids() const {
  std::vector<long> out;
  for (const auto& v : impl_->vehicles)
    if (v.exit_time < 0 && (v.track >= 0 || v.waiting)) out.push_back(v.id);
  return out;
}

std::vector<long> World::lane_vehicles(int link, int lane) const {
  const auto& t = impl_->topo;
  return impl_->on_track[std::size_t(t.lane_track.at(std::size_t(link)).at(std::size_t(lane)))];
}

int World::queue_length(int link) const {
  const auto& im = *impl_;
  int n = 0;
  for (int tr : im.topo.lane_track.at(std::size_t(link))) {
    for (long id : im.on_track[std::size_t(tr)]) {
      if (im.veh(id).speed >= im.params.stop_speed) break;
      ++n;
    }
  }
  return n;
}

bool World::pedestrians_crossing(int movement) const {
  for (const auto& ps : impl_->peds)
    if (ps.movement == movement) return !ps.crossings.empty();
  return false;
}

Leader World::effective_leader(long id) const {
  const auto& v = vehicle(id);
  if (v.track < 0) return {};
  std::vector<Candidate> cands;
  impl_->collect(v, cands);
  Leader out;
  for (const auto& c : cands)
    if (c.gap < out.gap) out = {c.kind, c.gap, c.speed, c.vehicle, impl_->constraint_accel(v, c.gap, c.speed, c.vehicle >= 0)};
  return out;
}

bool World::permissive_gap_accepted(long id, int conflict) const {
  const auto& v = vehicle(id);
  const auto& im = *impl_;
  if (v.track < 0) return true;
  const auto& leg = v.legs[std::size_t(v.leg)];
  const auto& c = model_->network().conflicts.at(std::size_t(conflict));
  const bool self_a = c.movement_a == leg.movement;
  if (!self_a && c.movement_b != leg.movement) throw InputError("conflict point is not on the vehicle's movement");
  const int other = self_a ? c.movement_b : c.movement_a;
  const int other_path = self_a ? c.path_b : c.path_a;
  const double self_dist = self_a ? c.dist_a : c.dist_b;
  const double other_dist = self_a ? c.dist_b : c.dist_a;
  const double half = im.topo.half_width[std::size_t(other)];
  const double s = im.path_position(v);
  const double t_clear = im.clear_time(v, self_dist + half + v.length - s);
  return im.gap_ok(v, t_clear, other, other_path, other_dist, im.topo.half_width[std::size_t(leg.movement)]);
}

long World::insert_vehicle(VehicleClass cls, const std::string& movement, int lane, double position, double speed,
                           const driver::DriverParams& p) {
  auto& im = *impl_;
  const auto& net = model_->network();
  const int m = net.movement_index(movement);
  const auto& mv = net.movements[std::size_t(m)];
  if (mv.cls == StreamClass::pedestrian || to_vehicle_class(mv.cls) != cls)
    throw InputError("vehicle class does not match movement '" + movement + "'");
  p.validate();
  Vehicle v;
  v.id = long(im.vehicles.size());
  v.cls = cls;
  v.movement = m;
  if (model_->plan().twice_crossing(m)) {
    v.legs = im.topo.twice[std::size_t(m)].at(std::size_t(lane));
    if (v.legs.empty()) throw InputError("lane does not serve movement '" + movement + "'");
  } else {
    const int path = mv.path_for_lane(lane);
    if (path < 0) throw InputError("lane does not serve movement '" + movement + "'");
    v.legs = {Leg{m, path, 0.0, mv.paths[std::size_t(path)].path.length()}};
  }
  v.track = im.topo.lane_track[std::size_t(mv.from_link)][std::size_t(lane)];
  const double len = im.track(v.track).length;
  if (!(position >= 0 && position <= len)) throw InputError("position outside the lane");
  v.position = position;
  v.speed = std::max(0.0, speed);
  v.length = model_->class_setup(cls).length;
  v.driver = p;
  v.arrival_time = v.entry_time = clock_;
  v.next_decision = clock_;
  auto& list = im.on_track[std::size_t(v.track)];
  auto it = list.begin();
  while (it != list.end() && im.veh(*it).position > position) ++it;
  if (it != list.begin()) {
    const auto& a = im.veh(*std::prev(it));
    if (a.position - a.length < position) throw InputError("inserted vehicle overlaps its leader");
  }
  if (it != list.end() && position - v.length < im.veh(*it).position)
    throw InputError("inserted vehicle overlaps its follower");
  im.vehicles.push_back(v);
  im.red_crossed.push_back(0);
  im.stop_latch.push_back(0);
  list.insert(it, v.id);
  ++counters_.spawned;
  ++counters_.inserted;
  ++counters_.active;
  return v.id;
}

namespace {

std::string where(const Model::Topology& t, const Vehicle& v) {
  if (v.track < 0) return v.waiting ? "waiting_area" : "entry_buffer";
  std::ostringstream os;
  os << t.tracks[std::size_t(v.track)].name << "@" << std::round(v.position * 100) / 100;
  return os.str();
}

}  // namespace

std::vector<long> World::spawn_arrivals() {
  auto& im = *impl_;
  const auto& net = model_->network();
  const auto& demand = model_->setup().demand;
  const double dt = im.params.dt;
  std::vector<long> inserted;

  for (const auto& stream : demand.streams) {
    const double rate = demand.rate(stream, clock_);
    if (rate <= 0) continue;
    std::poisson_distribution<int> pois(rate * dt / 3600.0);
    const int n = pois(im.rng);
    if (n == 0) continue;
    const int m = net.movement_index(stream.movement);
    const auto& mv = net.movements[std::size_t(m)];
    if (mv.cls == StreamClass::pedestrian) {
      for (auto& ps : im.peds)
        if (ps.movement == m) ps.waiting += n;
      continue;
    }
    const VehicleClass cls = to_vehicle_class(mv.cls);
    const auto& setup = model_->class_setup(cls);
    for (int k = 0; k < n; ++k) {
      Vehicle v;
      v.id = long(im.vehicles.size());
      v.cls = cls;
      v.movement = m;
      v.length = setup.length;
      v.driver = setup.drivers.sample(im.rng);
      v.arrival_time = clock_;
      im.vehicles.push_back(v);
      im.red_crossed.push_back(0);
      im.stop_latch.push_back(0);
  im.stop_latch.push_back(0);
      im.buffers[std::size_t(mv.from_link) * 2 + (cls == VehicleClass::motor ? 0 : 1)].push_back(v.id);
      ++counters_.spawned;
      ++counters_.buffered;
      if (im.params.record_events) events_.push_back({clock_, v.id, "arrive", net.links[std::size_t(mv.from_link)].id});
    }
  }

  // Drain entry buffers in FIFO order while the chosen lane has room.
  std::vector<Candidate> cands;
  for (std::size_t b = 0; b < im.buffers.size(); ++b) {
    auto& q = im.buffers[b];
    while (!q.empty()) {
      Vehicle& v = im.veh(q.front());
      const auto& mv = net.movements[std::size_t(v.movement)];
      const bool twice = model_->plan().twice_crossing(v.movement);
      int best_lane = -1;
      double best_room = -1.0;
      for (int lane : mv.from_lanes) {
        const int tr = im.topo.lane_track[std::size_t(mv.from_link)][std::size_t(lane)];
        const auto& list = im.on_track[std::size_t(tr)];
        const double room = list.empty() ? kNoVehicle : im.veh(list.back()).position - im.veh(list.back()).length;
        if (room >= v.driver.standstill_gap && room > best_room) {
          best_room = room;
          best_lane = lane;
        }
      }
      if (best_lane < 0) break;
      if (twice) {
        v.legs = im.topo.twice[std::size_t(v.movement)][std::size_t(best_lane)];
      } else {
        const int path = mv.path_for_lane(best_lane);
        v.legs = {Leg{v.movement, path, 0.0, mv.paths[std::size_t(path)].path.length()}};
      }
      v.leg = 0;
      v.track = im.topo.lane_track[std::size_t(mv.from_link)][std::size_t(best_lane)];
      v.position = 0.0;
      // Fastest entry speed the leader gap allows.
      double speed = im.vmax(v);
      for (; speed > 0.0; speed -= 0.5) {
        v.speed = speed;
        if (std::isinf(best_room) || im.constraint_accel(v, best_room, im.veh(im.on_track[std::size_t(v.track)].back()).speed, true) >= 0.0)
          break;
      }
      v.speed = std::max(0.0, speed);
      v.entry_time = clock_;
      v.next_decision = clock_ + v.driver.decision_period;
      im.on_track[std::size_t(v.track)].push_back(v.id);
      q.pop_front();
      --counters_.buffered;
      ++counters_.inserted;
      ++counters_.active;
      inserted.push_back(v.id);
      if (im.params.record_events) events_.push_back({clock_, v.id, "insert", where(im.topo, v)});
    }
  }
  counters_.max_buffered = std::max(counters_.max_buffered, counters_.buffered);
  return inserted;
}

void World::step() {
  auto& im = *impl_;
  const auto& net = model_->network();
  const auto& plan = model_->plan();
  const auto& topo = im.topo;
  const double dt = im.params.dt;
  const double t = clock_;
  const bool log = im.params.record_events;
  im.clock = t;
  using Kind = Model::Topology::Kind;

  // (1) signal state, already set for t; pedestrians
  for (auto& ps : im.peds) {
    std::erase_if(ps.crossings, [&](const Crossing& c) {
      return im.params.pedestrian_speed * (t - c.start) > ps.length + 4.0;
    });
    if (ps.waiting > 0 && im.ind[std::size_t(ps.movement)] != Indication::red) {
      // Waiting pedestrians leave as one group from each kerb.
      std::bernoulli_distribution side(0.5);
      bool fwd = false, back = false;
      for (int k = 0; k < ps.waiting; ++k) (side(im.rng) ? fwd : back) = true;
      if (fwd) ps.crossings.push_back({t, true});
      if (back) ps.crossings.push_back({t, false});
      ps.waiting = 0;
    }
  }

  // (2a) lane changes, downstream first
  std::vector<long> order;
  for (int tr : topo.track_order)
    for (long id : im.on_track[std::size_t(tr)]) order.push_back(id);

  for (long id : order) {
    Vehicle& v = im.veh(id);
    const auto& tr = im.track(v.track);
    if (tr.kind != Kind::approach || t < v.next_decision || t < v.lc_lockout_until) continue;
    v.next_decision = t + v.driver.decision_period;
    if (tr.length - v.position < 30.0) continue;
    const auto& link = net.links[std::size_t(tr.link)];
    if (link.lanes.size() < 2) continue;
    const auto& leg = v.legs[std::size_t(v.leg)];
    const auto& lmv = net.movements[std::size_t(leg.movement)];
    const auto& mv = net.movements[std::size_t(v.movement)];
    const StreamClass sc = v.cls == VehicleClass::motor ? StreamClass::motor : StreamClass::non_motor;
    auto& list = im.on_track[std::size_t(v.track)];
    const int idx = im.index_on_track(v);

    driver::LaneChangeContext ctx;
    ctx.speed = v.speed;
    if (idx > 0) {
      const auto& u = im.veh(list[std::size_t(idx - 1)]);
      ctx.leader_gap = u.position - u.length - v.position;
      ctx.leader_speed = u.speed;
    }
    if (idx + 1 < int(list.size())) {
      const auto& u = im.veh(list[std::size_t(idx + 1)]);
      ctx.rear_gap = v.position - v.length - u.position;
      ctx.rear_speed = u.speed;
    }
    auto fill = [&](int lane, driver::TargetLane& target) {
      if (lane < 0 || lane >= int(link.lanes.size())) return;
      const auto& ln = link.lanes[std::size_t(lane)];
      if (!ln.admits(sc) || !ln.allows(mv.turn) || lmv.path_for_lane(lane) < 0) return;
      if (model_->plan().twice_crossing(v.movement) && topo.twice[std::size_t(v.movement)][std::size_t(lane)].empty()) return;
      target.available = true;
      const int tt = topo.lane_track[std::size_t(tr.link)][std::size_t(lane)];
      for (long uid : im.on_track[std::size_t(tt)]) {
        const auto& u = im.veh(uid);
        if (u.position > v.position) {
          target.lead_gap = u.position - u.length - v.position;
          target.lead_speed = u.speed;
        } else {
          target.lag_gap = v.position - v.length - u.position;
          target.lag_speed = u.speed;
          break;
        }
      }
    };
    fill(tr.lane - 1, ctx.nearside);
    fill(tr.lane + 1, ctx.offside);
    if (!ctx.nearside.available && !ctx.offside.available) continue;
    const auto out = driver::decide_lane_change(im.behavior(v).lane_change, v.driver, ctx);
    if (out.decision == driver::LaneDecision::stay) continue;
    const int lane = out.decision == driver::LaneDecision::to_nearside ? tr.lane - 1 : tr.lane + 1;
    const driver::TargetLane& target = lane < tr.lane ? ctx.nearside : ctx.offside;
    // The changer and its new follower must both still be able to stop
    // behind their leader under the emergency bound.
    const double keep = std::max(im.params.min_safety_gap, 0.5 * v.driver.standstill_gap);
    auto room = [&](double follower, double leader, double gap) {
      if (!std::isfinite(gap)) return true;
      const double d = im.params.emergency_decel;
      return gap >= keep + follower * dt + std::max(0.0, (follower * follower - leader * leader) / (2.0 * d));
    };
    if (!room(v.speed, target.lead_speed, target.lead_gap) || !room(target.lag_speed, v.speed, target.lag_gap))
      continue;
    list.erase(list.begin() + idx);
    v.track = topo.lane_track[std::size_t(tr.link)][std::size_t(lane)];
    if (model_->plan().twice_crossing(v.movement))
      v.legs = topo.twice[std::size_t(v.movement)][std::size_t(lane)];
    else
      v.legs[0].path = lmv.path_for_lane(lane);
    auto& dst = im.on_track[std::size_t(v.track)];
    auto it = dst.begin();
    while (it != dst.end() && im.veh(*it).position > v.position) ++it;
    dst.insert(it, v.id);
    v.lc_lockout_until = t + im.params.lc_lockout;
    ++counters_.lane_changes;
    if (log) events_.push_back({t, v.id, "lane_change", where(topo, v)});
  }

  // (2b) accelerations from the pre-update state
  order.clear();
  for (int tr : topo.track_order)
    for (long id : im.on_track[std::size_t(tr)]) order.push_back(id);
  std::vector<Candidate> cands;
  std::vector<double> accel(order.size());
  im.stepping = true;
  for (std::size_t k = 0; k < order.size(); ++k) accel[k] = im.acceleration(im.veh(order[k]), cands, nullptr);
  im.stepping = false;

  // (3) semi-implicit Euler
  for (std::size_t k = 0; k < order.size(); ++k) {
    Vehicle& v = im.veh(order[k]);
    const double old_speed = v.speed;
    v.accel = accel[k];
    v.speed = std::clamp(v.speed + v.accel * dt, 0.0, im.vmax(v));
    v.accel = (v.speed - old_speed) / dt;
    v.position += v.speed * dt;
    v.distance += v.speed * dt;
    if (v.speed < im.params.stop_speed) v.slow_time += dt;
    if (!v.stopped && v.speed < 0.1) {
      v.stopped = true;
      ++v.stop_count;
    } else if (v.stopped && v.speed > im.params.stop_speed) {
      v.stopped = false;
    }
    if (im.track(v.track).kind == Kind::box && v.speed < 0.1)
      v.box_wait += dt;
    else if (v.speed >= 0.1)
      v.box_wait = 0.0;
    if (v.box_wait > im.params.max_box_wait && v.box_wait - dt <= im.params.max_box_wait) {
      ++counters_.forced_moves;
      if (log) events_.push_back({t, v.id, "forced", where(topo, v)});
    }
  }
  for (long id : im.waiting) im.veh(id).slow_time += dt;

  // (4)(5) transitions, front vehicles first on each track
  auto insert_sorted = [&](int track, long id) {
    auto& dst = im.on_track[std::size_t(track)];
    const double pos = im.veh(id).position;
    auto it = dst.begin();
    while (it != dst.end() && im.veh(*it).position > pos) ++it;
    dst.insert(it, id);
  };
  for (int tr_id : topo.track_order) {
    auto& list = im.on_track[std::size_t(tr_id)];
    const auto& tr = im.track(tr_id);
    while (!list.empty()) {
      Vehicle& v = im.veh(list.front());
      const double end = im.track_end(v);
      if (v.position < end) break;
      list.erase(list.begin());
      if (tr.kind == Kind::approach) {
        const int m = v.legs[std::size_t(v.leg)].movement;
        if (im.ind[std::size_t(m)] == Indication::red) im.red_crossed[std::size_t(v.id)] = 1;
        im.stop_latch[std::size_t(v.id)] = 0;
        if (v.leg == 0) v.stop_line_time = t + dt;
        const double over = v.position - end;
        v.track = im.route_box_track(v, v.leg);
        v.position = v.legs[std::size_t(v.leg)].from + over;
        insert_sorted(v.track, v.id);
        if (log) events_.push_back({t, v.id, "enter_box", where(topo, v)});
      } else if (tr.kind == Kind::box) {
        if (v.leg + 1 < int(v.legs.size())) {
          v.track = -1;
          v.waiting = true;
          v.speed = 0.0;
          ++v.leg;
          if (!v.stopped) {
            v.stopped = true;
            ++v.stop_count;
          }
          im.waiting.push_back(v.id);
          ++counters_.waiting;
          counters_.max_waiting = std::max(counters_.max_waiting, counters_.waiting);
          if (log) events_.push_back({t, v.id, "wait", net.movements[std::size_t(v.legs[std::size_t(v.leg)].movement)].id});
        } else {
          const double over = v.position - end;
          v.track = tr.exit_track;
          v.position = over;
          insert_sorted(v.track, v.id);
        }
      } else {
        v.track = -1;
        v.exit_time = t + dt;
        --counters_.active;
        ++counters_.exited;
        VehicleRecord r;
        r.id = v.id;
        r.cls = v.cls;
        r.movement = net.movements[std::size_t(v.movement)].id;
        r.approach = net.movements[std::size_t(v.movement)].from_link;
        r.arrival = v.arrival_time;
        r.entry = v.entry_time;
        r.stop_line = v.stop_line_time;
        r.exit = v.exit_time;
        r.distance = v.distance;
        r.stops = v.stop_count;
        r.slow_time = v.slow_time;
        double route = net.links[std::size_t(r.approach)].length + tr.length;
        for (const auto& l : v.legs) route += l.to - l.from;
        const double vfree = std::min(v.driver.desired_speed, tr.speed_limit);
        r.free_flow_time = route / vfree;
        records_.push_back(r);
        if (log) events_.push_back({t, v.id, "exit", tr.name});
      }
    }
  }

  // Waiting area: resume on the second crossing once it is green and clear.
  for (auto it = im.waiting.begin(); it != im.waiting.end();) {
    Vehicle& v = im.veh(*it);
    const auto& leg = v.legs[std::size_t(v.leg)];
    if (im.ind[std::size_t(leg.movement)] == Indication::red) {
      ++it;
      continue;
    }
    const int tr = topo.box_track[std::size_t(leg.movement)][std::size_t(leg.path)];
    bool clear = true;
    for (long uid : im.on_track[std::size_t(tr)]) {
      const auto& u = im.veh(uid);
      if (u.position > leg.from) {
        if (u.position - u.length - leg.from < v.driver.standstill_gap) clear = false;
      } else {
        const double gap = leg.from - v.length - u.position;
        if (gap < u.driver.standstill_gap + u.speed * u.speed / (2.0 * u.driver.max_decel) + u.speed * dt) clear = false;
        break;
      }
    }
    if (!clear) {
      ++it;
      continue;
    }
    v.track = tr;
    v.position = leg.from;
    v.speed = 0.0;
    v.waiting = false;
    insert_sorted(tr, v.id);
    it = im.waiting.erase(it);
    --counters_.waiting;
    ++counters_.twice_crossings;
    if (log) events_.push_back({t, v.id, "resume", where(topo, v)});
  }

  // Red-line check: a crossing made on red counts once the front is more
  // than the tolerance past the line while the movement is still red.
  for (long id : order) {
    Vehicle& v = im.veh(id);
    if (!im.red_crossed[std::size_t(id)]) continue;
    if (v.track < 0 || im.track(v.track).kind != Kind::box) {
      im.red_crossed[std::size_t(id)] = 0;
      continue;
    }
    const int m = v.legs[std::size_t(v.leg)].movement;
    if (plan.indication(m, t + dt) != Indication::red) {
      im.red_crossed[std::size_t(id)] = 0;
    } else if (v.position - v.legs[std::size_t(v.leg)].from > 0.5) {
      ++counters_.red_violations;
      im.red_crossed[std::size_t(id)] = 0;
      if (log) events_.push_back({t, v.id, "red_violation", where(topo, v)});
    }
  }

  // (6) arrivals
  spawn_arrivals();

  // (7) clock
  ++im.step_index;
  clock_ = model_->setup().demand.start + double(im.step_index) * dt;
  im.set_clock(clock_);

  const double period = im.params.queue_sample_period;
  const double rel = clock_ - model_->setup().demand.start;
  if (std::abs(rel / period - std::round(rel / period)) < 1e-9) {
    QueueSample q;
    q.t = clock_;
    for (int l : topo.approach_links) q.queue.push_back(queue_length(l));
    queues_.push_back(std::move(q));
  }

  // Invariants
  long on_tracks = 0;
  for (std::size_t tr = 0; tr < im.on_track.size(); ++tr) {
    const auto& list = im.on_track[tr];
    on_tracks += long(list.size());
    for (std::size_t k = 0; k < list.size(); ++k) {
      const auto& v = im.veh(list[k]);
      if (v.speed < 0 || v.speed > im.vmax(v) + 1e-9)
        throw SimulationError("speed out of range for vehicle " + std::to_string(v.id) + " at t=" + std::to_string(clock_));
      if (k > 0) {
        const auto& a = im.veh(list[k - 1]);
        if (a.position - a.length - v.position < -1e-9)
          throw SimulationError("collision between vehicles " + std::to_string(a.id) + " and " + std::to_string(v.id) +
                                " on " + topo.tracks[tr].name + " at t=" + std::to_string(clock_));
      }
    }
    const auto& track = topo.tracks[tr];
    if (track.kind == Kind::exit && !list.empty()) {
      const auto& e = im.veh(list.back());
      const double overhang = e.length - e.position;
      if (overhang > 0) {
        for (int f : track.feeders) {
          for (long id : im.on_track[std::size_t(f)]) {
            const auto& b = im.veh(id);
            const double rem = topo.tracks[std::size_t(f)].length - b.position;
            if (rem < overhang - 1e-9 && b.id != e.id)
              throw SimulationError("collision at merge into " + track.name + " between vehicles " +
                                    std::to_string(e.id) + " and " + std::to_string(b.id) + " at t=" +
                                    std::to_string(clock_));
          }
        }
      }
    }
  }
  const long waiting = long(im.waiting.size());
  long buffered = 0;
  for (const auto& q : im.buffers) buffered += long(q.size());
  if (on_tracks + waiting != counters_.active || buffered != counters_.buffered || waiting != counters_.waiting ||
      counters_.spawned != counters_.active + counters_.exited + counters_.buffered)
    throw SimulationError("vehicle conservation broken at t=" + std::to_string(clock_));
}

RunResult World::finish() {
  RunResult r;
  r.records = std::move(records_);
  r.queues = std::move(queues_);
  r.approach_links = impl_->topo.approach_links;
  r.events = std::move(events_);
  r.counters = counters_;
  r.start = model_->setup().demand.start;
  r.end = clock_;
  records_.clear();
  queues_.clear();
  events_.clear();
  return r;
}

RunResult run(std::shared_ptr<const Model> model, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  World w(std::move(model), seed);
  while (!w.done()) w.step();
  auto r = w.finish();
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

RunResult run(std::shared_ptr<const Model> model) {
  const auto seed = model->setup().params.seed;
  return run(std::move(model), seed);
}

}  // namespace fuzzsim::sim
