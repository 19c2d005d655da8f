#pragma once

// Time-stepped microsimulation of one signalised intersection.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "fuzzsim/driver.hpp"
#include "fuzzsim/network.hpp"
#include "fuzzsim/signal.hpp"

namespace fuzzsim::sim {

using driver::VehicleClass;

struct TruncatedNormal {
  double mean = 0.0;
  double sd = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  double sample(std::mt19937_64& rng) const;
  void validate(const std::string& what) const;  // throws InputError
  static TruncatedNormal fixed(double v) { return {v, 0.0, v, v}; }
};

/// Per-class distributions from which each driver's parameters are drawn.
struct DriverDistribution {
  TruncatedNormal desired_speed;
  TruncatedNormal desired_time_headway;
  TruncatedNormal standstill_gap;
  TruncatedNormal max_accel;
  TruncatedNormal max_decel;
  double decision_period = 0.5;
  double lc_intention_threshold = 0.6;

  driver::DriverParams sample(std::mt19937_64& rng) const;
  void validate() const;

  static DriverDistribution motor_default();
  static DriverDistribution non_motor_default();
};

struct ClassSetup {
  DriverDistribution drivers;
  driver::FuzzyConfig fuzzy;
  double length = 4.5;        // m
  double critical_gap = 4.0;  // s, permissive gap acceptance

  static ClassSetup motor_default();
  static ClassSetup non_motor_default();
};

/// Flow of one (movement, class) pair: veh/h (pedestrians/h for pedestrian
/// streams) per demand interval; the last rate holds to the end.
struct DemandStream {
  std::string movement;
  net::StreamClass cls = net::StreamClass::motor;
  std::vector<double> rates;
};

struct DemandProfile {
  double start = 0.0;  // s
  double end = 3600.0;
  double interval = 900.0;
  std::vector<DemandStream> streams;

  double rate(const DemandStream& s, double t) const noexcept;
  std::vector<std::string> validate(const net::Network& net) const;
};

struct SimParams {
  double dt = 0.5;
  std::uint64_t seed = 42;
  double warmup = 0.0;
  double queue_sample_period = 5.0;
  double stop_speed = 1.4;         // m/s; queued below this
  double lc_lockout = 2.0;         // s after a lane change
  double emergency_decel = 7.5;    // m/s^2, safety layer bound
  double min_safety_gap = 0.5;     // m kept by the safety layer
  double pedestrian_speed = 1.2;   // m/s, crossing time = width / speed
  double max_box_wait = 90.0;      // s stopped in the box before forcing through
  double lookahead = 150.0;        // m
  bool record_events = true;

  void validate() const;
};

struct Setup {
  net::Network network;
  signal::PhasePlan plan;
  DemandProfile demand;
  ClassSetup motor = ClassSetup::motor_default();
  ClassSetup non_motor = ClassSetup::non_motor_default();
  SimParams params;
};

/// Immutable, validated model shared by any number of runs.
class Model {
 public:
  explicit Model(Setup setup);  // throws ValidationError / InputError
  ~Model();
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const Setup& setup() const noexcept { return setup_; }
  const net::Network& network() const noexcept { return setup_.network; }
  const signal::CompiledPlan& plan() const noexcept { return plan_; }
  const driver::BehaviorModels& behavior(VehicleClass c) const noexcept {
    return c == VehicleClass::motor ? motor_ : non_motor_;
  }
  const ClassSetup& class_setup(VehicleClass c) const noexcept {
    return c == VehicleClass::motor ? setup_.motor : setup_.non_motor;
  }

  struct Topology;
  const Topology& topology() const noexcept { return *topo_; }

 private:
  Setup setup_;
  signal::CompiledPlan plan_;
  driver::BehaviorModels motor_;
  driver::BehaviorModels non_motor_;
  std::unique_ptr<Topology> topo_;
};

/// One stretch of a vehicle's route through the box.
struct Leg {
  int movement = -1;
  int path = 0;
  double from = 0.0;  // m along the path where the leg starts
  double to = 0.0;    // m along the path where the leg ends
};

struct Vehicle {
  long id = 0;
  VehicleClass cls = VehicleClass::motor;
  int movement = -1;  // route movement as demanded
  std::vector<Leg> legs;
  int leg = 0;
  int track = -1;          // -1 while in the entry buffer or waiting area
  double position = 0.0;   // m of front bumper from track start
  double speed = 0.0;
  double accel = 0.0;
  double length = 4.5;
  driver::DriverParams driver;
  double arrival_time = 0.0;
  double entry_time = 0.0;
  double stop_line_time = -1.0;
  double exit_time = -1.0;
  int stop_count = 0;
  bool stopped = false;
  double slow_time = 0.0;
  double distance = 0.0;
  double lc_lockout_until = 0.0;
  double next_decision = 0.0;
  double box_wait = 0.0;
  bool waiting = false;  // twice-crossing waiting area
};

enum class LeaderKind { none, vehicle, stop_line, conflict_point, merge };

const char* to_string(LeaderKind k) noexcept;

struct Leader {
  LeaderKind kind = LeaderKind::none;
  double gap = driver::kNoVehicle;  // m clear distance
  double speed = 0.0;
  long vehicle = -1;
  double accel = 0.0;  // acceleration this constraint imposes
};

struct Event {
  double t = 0.0;
  long vehicle = -1;
  std::string type;
  std::string where;
};

void write_event(std::ostream& os, const Event& e);

struct VehicleRecord {
  long id = 0;
  VehicleClass cls = VehicleClass::motor;
  std::string movement;
  int approach = -1;  // approach link index
  double arrival = 0.0;
  double entry = 0.0;
  double stop_line = 0.0;  // s, front crossed the stop line
  double exit = 0.0;
  double distance = 0.0;
  int stops = 0;
  double slow_time = 0.0;
  double free_flow_time = 0.0;
};

struct QueueSample {
  double t = 0.0;
  std::vector<int> queue;  // per approach, in Network link order
};

struct Counters {
  long spawned = 0;
  long inserted = 0;
  long exited = 0;
  long buffered = 0;  // currently in entry buffers
  long active = 0;    // inserted and not yet exited
  long waiting = 0;   // currently in twice-crossing waiting areas
  long max_buffered = 0;
  long max_waiting = 0;
  long red_violations = 0;
  long forced_moves = 0;
  long lane_changes = 0;
  long twice_crossings = 0;
};

struct RunResult {
  std::vector<VehicleRecord> records;
  std::vector<QueueSample> queues;
  std::vector<int> approach_links;
  std::vector<Event> events;
  Counters counters;
  double start = 0.0;
  double end = 0.0;
  double wall_seconds = 0.0;
};

class World {
 public:
  World(std::shared_ptr<const Model> model, std::uint64_t seed);
  ~World();
  World(World&&) noexcept;
  World& operator=(World&&) noexcept;

  const Model& model() const noexcept { return *model_; }
  double clock() const noexcept { return clock_; }
  double end() const noexcept;
  bool done() const noexcept { return clock_ >= end() - 1e-9; }

  /// Advance one dt. Throws SimulationError on an invariant breach.
  void step();

  /// Poisson arrivals for the current step; returns ids inserted onto lanes.
  std::vector<long> spawn_arrivals();

  /// Most restrictive constraint ahead of an active vehicle.
  Leader effective_leader(long id) const;
  /// Gap acceptance at a conflict point on the vehicle's current leg.
  bool permissive_gap_accepted(long id, int conflict) const;

  /// Place a vehicle directly (tests and scripted checks). Returns its id.
  long insert_vehicle(VehicleClass cls, const std::string& movement, int lane, double position, double speed,
                      const driver::DriverParams& p);

  const Vehicle& vehicle(long id) const;
  std::vector<long> active_ids() const;
  std::vector<long> lane_vehicles(int link, int lane) const;  // front first
  int queue_length(int link) const;
  const Counters& counters() const noexcept { return counters_; }
  const std::vector<Event>& events() const noexcept { return events_; }
  const std::vector<VehicleRecord>& records() const noexcept { return records_; }
  const std::vector<QueueSample>& queue_samples() const noexcept { return queues_; }
  bool pedestrians_crossing(int movement) const;

  RunResult finish();

 private:
  struct Impl;
  std::shared_ptr<const Model> model_;
  std::unique_ptr<Impl> impl_;
  double clock_ = 0.0;
  Counters counters_;
  std::vector<Event> events_;
  std::vector<VehicleRecord> records_;
  std::vector<QueueSample> queues_;
};

/// Full run from the demand start to its end.
RunResult run(std::shared_ptr<const Model> model, std::uint64_t seed);
RunResult run(std::shared_ptr<const Model> model);  // seed from the params

}  // namespace fuzzsim::sim
