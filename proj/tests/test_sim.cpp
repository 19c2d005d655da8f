#include <doctest.h>

#include <cmath>

#include "fuzzsim/errors.hpp"
#include "sim_fixture.hpp"

using namespace fuzzsim;
using namespace fuzzsim::sim;

namespace {

const net::Network& cross() {
  static const net::Network n = net::standard_cross_intersection();
  return n;
}

// Every movement permissive and green for the whole run.
signal::PhasePlan open_plan() {
  signal::PhasePlan p;
  p.name = "open";
  signal::Phase ph;
  ph.name = "all";
  ph.green = 1e7;
  for (const auto& m : cross().movements) ph.permitted.push_back(m.id);
  ph.permissive = ph.permitted;
  p.phases.push_back(ph);
  return p;
}

std::shared_ptr<const Model> model(signal::PhasePlan plan, std::vector<DemandStream> streams, double end = 3600,
                                   bool events = true) {
  Setup s;
  s.network = cross();
  s.plan = std::move(plan);
  s.demand.end = end;
  s.demand.streams = std::move(streams);
  s.params.record_events = events;
  return std::make_shared<const Model>(std::move(s));
}

driver::DriverParams motor(double desired = 13.9) {
  auto p = driver::DriverParams::motor_default();
  p.desired_speed = desired;
  return p;
}

int conflict_index(const std::string& a, int path_a, const std::string& b, int path_b) {
  const int ma = cross().movement_index(a);
  const int mb = cross().movement_index(b);
  for (std::size_t i = 0; i < cross().conflicts.size(); ++i) {
    const auto& c = cross().conflicts[i];
    if (c.movement_a == ma && c.movement_b == mb && c.path_a == path_a && c.path_b == path_b) return int(i);
    if (c.movement_a == mb && c.movement_b == ma && c.path_a == path_b && c.path_b == path_a) return int(i);
  }
  return -1;
}

double stop_gap(const World& w, long id) {
  const auto& v = w.vehicle(id);
  return cross().links[std::size_t(cross().link_index("WB_in"))].length - v.position;
}

}  // namespace

TEST_CASE("Poisson arrivals stay within three sigma") {
  const auto m = model(signal::builtin_plan(1, cross()), {{"NB_T", net::StreamClass::motor, {600}}}, 3600, false);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = run(m, seed);
    INFO("seed " << seed << " spawned " << r.counters.spawned);
    CHECK(std::abs(double(r.counters.spawned) - 600.0) <= 3.0 * std::sqrt(600.0));
  }
}

TEST_CASE("zero demand produces nothing") {
  const auto m = model(signal::builtin_plan(2, cross()), {}, 600);
  const auto r = run(m, 7);
  CHECK(r.counters.spawned == 0);
  CHECK(r.records.empty());
  CHECK(r.queues.size() == 120);
  for (const auto& q : r.queues)
    for (int n : q.queue) CHECK(n == 0);
}

TEST_CASE("empty world step advances only the clock") {
  const auto m = model(signal::builtin_plan(1, cross()), {}, 100);
  World w(m, 1);
  w.step();
  CHECK(w.clock() == doctest::Approx(0.5));
  CHECK(w.active_ids().empty());
  CHECK(w.events().empty());
  CHECK(w.counters().spawned == 0);
}

TEST_CASE("entry buffer absorbs demand above lane capacity") {
  const auto m = model(signal::builtin_plan(1, cross()), {{"WB_T", net::StreamClass::motor, {5000}}}, 600, false);
  const auto r = run(m, 3);
  CHECK(r.counters.max_buffered > 10);
  CHECK(r.counters.spawned == r.counters.exited + r.counters.active + r.counters.buffered);
}

TEST_CASE("effective leader") {
  const auto m = model(signal::builtin_plan(1, cross()), {}, 600);
  World w(m, 1);
  // At t = 0 the NB phase is green and WB is red.
  SUBCASE("green and clear: none") {
    const long id = w.insert_vehicle(VehicleClass::motor, "NB_T", 1, 280.0, 10.0, motor());
    CHECK(w.effective_leader(id).kind == LeaderKind::none);
  }
  SUBCASE("red at 40 m: stop line") {
    const long id = w.insert_vehicle(VehicleClass::motor, "WB_T", 1, 260.0, 10.0, motor());
    const auto l = w.effective_leader(id);
    CHECK(l.kind == LeaderKind::stop_line);
    CHECK(l.gap == doctest::Approx(40.0));
    CHECK(l.speed == 0.0);
  }
  SUBCASE("vehicle ahead on the same lane") {
    const long a = w.insert_vehicle(VehicleClass::motor, "WB_T", 1, 299.0, 0.0, motor());
    const long b = w.insert_vehicle(VehicleClass::motor, "WB_T", 1, 270.0, 5.0, motor());
    const auto l = w.effective_leader(b);
    CHECK(l.kind == LeaderKind::vehicle);
    CHECK(l.vehicle == a);
    CHECK(l.gap == doctest::Approx(299.0 - 4.5 - 270.0));
  }
  SUBCASE("overlapping insertion is rejected") {
    w.insert_vehicle(VehicleClass::motor, "WB_T", 1, 100.0, 0.0, motor());
    CHECK_THROWS_AS(w.insert_vehicle(VehicleClass::motor, "WB_T", 1, 102.0, 0.0, motor()), InputError);
    CHECK_THROWS_AS(w.insert_vehicle(VehicleClass::motor, "WB_T", 0, 50.0, 0.0, motor()), InputError);
    CHECK_THROWS_AS(w.insert_vehicle(VehicleClass::non_motor, "WB_T", 1, 50.0, 0.0, motor()), InputError);
  }
}

TEST_CASE("permissive right yields to crossing pedestrians") {
  const auto m = model(signal::builtin_plan(1, cross()), {{"ped_E", net::StreamClass::pedestrian, {20000}}}, 600);
  World w(m, 5);
  const int ped = cross().movement_index("ped_E");
  while (!w.pedestrians_crossing(ped) && w.clock() < 20) w.step();
  REQUIRE(w.pedestrians_crossing(ped));
  const long id = w.insert_vehicle(VehicleClass::motor, "NB_R", 1, 290.0, 0.0, motor());
  bool held = false;
  for (int k = 0; k < 20 && !held; ++k) {
    held = w.effective_leader(id).kind == LeaderKind::conflict_point;
    w.step();
  }
  CHECK(held);
}

TEST_CASE("gap acceptance at a permissive left") {
  // Plan 3 at t = 0: NS street green, lefts permissive against protected throughs.
  const auto m = model(signal::builtin_plan(3, cross()), {}, 600);
  const auto& nb_l = cross().movements[std::size_t(cross().movement_index("NB_L"))];
  const int path = nb_l.path_for_lane(2);
  const int c1 = conflict_index("NB_L", path, "SB_T", 0);
  const int c2 = conflict_index("NB_L", path, "SB_T", 1);
  REQUIRE(c1 >= 0);
  REQUIRE(c2 >= 0);

  SUBCASE("no traffic: accept") {
    World w(m, 1);
    const long id = w.insert_vehicle(VehicleClass::motor, "NB_L", 2, 299.0, 0.0, motor());
    CHECK(w.permissive_gap_accepted(id, c1));
    CHECK(w.permissive_gap_accepted(id, c2));
  }
  SUBCASE("opposing vehicle arriving in about a second: reject") {
    World w(m, 1);
    const long id = w.insert_vehicle(VehicleClass::motor, "NB_L", 2, 299.0, 0.0, motor());
    w.insert_vehicle(VehicleClass::motor, "SB_T", 2, 296.0, 13.0, motor(13.0));
    w.insert_vehicle(VehicleClass::motor, "SB_T", 1, 296.0, 13.0, motor(13.0));
    CHECK_FALSE(w.permissive_gap_accepted(id, c1));
    CHECK_FALSE(w.permissive_gap_accepted(id, c2));
  }
  SUBCASE("queued opposing vehicle does not count as approaching") {
    World w(m, 1);
    const long id = w.insert_vehicle(VehicleClass::motor, "NB_L", 2, 299.0, 0.0, motor());
    w.insert_vehicle(VehicleClass::motor, "SB_T", 1, 298.0, 0.0, motor());
    CHECK(w.permissive_gap_accepted(id, c1));
  }
  SUBCASE("receding vehicle: accept") {
    World w(m, 1);
    const long o = w.insert_vehicle(VehicleClass::motor, "SB_T", 1, 290.0, 13.0, motor(13.0));
    while (w.vehicle(o).track >= 0 && w.clock() < 10) {
      w.step();
      const auto& v = w.vehicle(o);
      if (v.position > 40.0 || cross().links[std::size_t(cross().link_index("SB_in"))].length < v.position) break;
    }
    for (int k = 0; k < 6; ++k) w.step();
    const long id = w.insert_vehicle(VehicleClass::motor, "NB_L", 2, 299.0, 0.0, motor());
    CHECK(w.permissive_gap_accepted(id, c1));
    CHECK(w.permissive_gap_accepted(id, c2));
  }
}

TEST_CASE("free acceleration is monotone up to the desired speed") {
  const auto m = model(open_plan(), {}, 600);
  World w(m, 1);
  const long id = w.insert_vehicle(VehicleClass::motor, "NB_T", 1, 0.0, 0.0, motor());
  double last = 0.0;
  for (int k = 0; k < 40; ++k) {
    w.step();
    const double v = w.vehicle(id).speed;
    CHECK(v >= last - 1e-12);
    CHECK(v <= 13.9 + 1e-9);
    last = v;
  }
  CHECK(last > 12.0);
}

TEST_CASE("stops at a red line from 100 m at 15 m/s") {
  // WB stays red for the first 28 s of plan 1.
  const auto m = model(signal::builtin_plan(1, cross()), {}, 600);
  World w(m, 1);
  auto p = motor(15.0);
  const long id = w.insert_vehicle(VehicleClass::motor, "WB_T", 1, 200.0, 15.0, p);
  while (w.clock() < 25.0) {
    w.step();
    CHECK(w.vehicle(id).track >= 0);
    CHECK(stop_gap(w, id) > 0.0);
  }
  CHECK(w.vehicle(id).speed < 0.1);
  CHECK(stop_gap(w, id) <= p.standstill_gap + 1.0);
  CHECK(w.counters().red_violations == 0);
}

TEST_CASE("queue length counts the contiguous slow run from the line") {
  const auto m = model(signal::builtin_plan(1, cross()), {}, 600);
  World w(m, 1);
  const int wb = cross().link_index("WB_in");
  for (int k = 0; k < 7; ++k) w.insert_vehicle(VehicleClass::motor, "WB_T", 1, 299.0 - 7.0 * k, 0.0, motor());
  w.insert_vehicle(VehicleClass::motor, "WB_T", 1, 100.0, 12.0, motor());
  CHECK(w.queue_length(wb) == 7);
}

TEST_CASE("runs are deterministic per seed") {
  const auto m = fixture::mixed_model(3, 1.0, 900);
  const auto a = run(m, 11);
  const auto b = run(m, 11);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].id == b.records[i].id);
    CHECK(a.records[i].exit == b.records[i].exit);
    CHECK(a.records[i].distance == b.records[i].distance);
  }
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) CHECK(a.events[i].where == b.events[i].where);
  const auto c = run(m, 12);
  CHECK(c.counters.spawned != a.counters.spawned);
}

TEST_CASE("mixed traffic: no collisions, no red running, exact conservation") {
  for (int plan : {1, 2, 3}) {
    const auto m = fixture::mixed_model(plan, 1.0, 1200);
    for (std::uint64_t seed : {1, 2}) {
      RunResult r;
      CHECK_NOTHROW(r = run(m, seed));
      const auto& c = r.counters;
      INFO("plan " << plan << " seed " << seed);
      CHECK(c.red_violations == 0);
      CHECK(c.spawned == c.exited + c.active + c.buffered);
      CHECK(c.exited == long(r.records.size()));
      CHECK(c.exited > 0);
      for (const auto& rec : r.records) {
        CHECK(rec.exit >= rec.entry);
        CHECK(rec.entry >= rec.arrival);
        CHECK(rec.distance >= 0.0);
        CHECK(rec.free_flow_time > 0.0);
      }
      if (plan == 1) CHECK(c.twice_crossings > 0);
    }
  }
}

TEST_CASE("model validation") {
  Setup s;
  s.network = cross();
  s.plan = signal::builtin_plan(1, cross());
  s.demand.streams = {{"XX_T", net::StreamClass::motor, {100}}};
  CHECK_THROWS_AS(Model{s}, ValidationError);
  s.demand.streams = {{"NB_T", net::StreamClass::non_motor, {100}}};
  CHECK_THROWS_AS(Model{s}, ValidationError);
  s.demand.streams = {{"NB_T", net::StreamClass::motor, {-1}}};
  CHECK_THROWS_AS(Model{s}, ValidationError);
  s.demand.streams = {};
  s.params.dt = 0;
  CHECK_THROWS_AS(Model{s}, InputError);
  s.params.dt = 0.5;
  s.motor.drivers.desired_speed = {20, 1, 10, 15};
  CHECK_THROWS_AS(Model{s}, InputError);
}

TEST_CASE("truncated normal stays in bounds") {
  std::mt19937_64 rng(3);
  const TruncatedNormal d{10, 5, 8, 12};
  for (int i = 0; i < 1000; ++i) {
    const double x = d.sample(rng);
    CHECK(x >= 8);
    CHECK(x <= 12);
  }
  CHECK(TruncatedNormal::fixed(3.5).sample(rng) == 3.5);
}
