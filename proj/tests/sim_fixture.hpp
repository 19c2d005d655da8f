#pragma once

// Mixed-traffic setup shared by the simulation tests.

#include <memory>

#include "fuzzsim/signal.hpp"
#include "fuzzsim/sim.hpp"

namespace fixture {

using namespace fuzzsim;

struct Volumes {
  double motor_left = 180, motor_through = 220, motor_right = 60;
  double nm_left = 60, nm_through = 120, nm_right = 40;
  double pedestrian = 100;
};

inline sim::DemandProfile mixed_demand(double scale = 1.0, double duration = 3600.0, Volumes v = {}) {
  sim::DemandProfile d;
  d.end = duration;
  const double shape[] = {0.85, 1.0, 1.1, 0.95};
  auto add = [&](const std::string& id, net::StreamClass c, double base) {
    sim::DemandStream s{id, c, {}};
    for (double k : shape) s.rates.push_back(base * k * scale);
    d.streams.push_back(s);
  };
  for (auto side : {net::Side::north, net::Side::east, net::Side::south, net::Side::west}) {
    add(net::movement_id(side, net::Turn::left, net::StreamClass::motor), net::StreamClass::motor, v.motor_left);
    add(net::movement_id(side, net::Turn::through, net::StreamClass::motor), net::StreamClass::motor, v.motor_through);
    add(net::movement_id(side, net::Turn::right, net::StreamClass::motor), net::StreamClass::motor, v.motor_right);
    add(net::movement_id(side, net::Turn::left, net::StreamClass::non_motor), net::StreamClass::non_motor, v.nm_left);
    add(net::movement_id(side, net::Turn::through, net::StreamClass::non_motor), net::StreamClass::non_motor, v.nm_through);
    add(net::movement_id(side, net::Turn::right, net::StreamClass::non_motor), net::StreamClass::non_motor, v.nm_right);
    add(net::pedestrian_id(side), net::StreamClass::pedestrian, v.pedestrian);
  }
  return d;
}

inline std::shared_ptr<const sim::Model> mixed_model(int plan, double scale = 1.0, double duration = 3600.0,
                                                     Volumes v = {}) {
  sim::Setup s;
  s.network = net::standard_cross_intersection();
  s.plan = signal::builtin_plan(plan, s.network);
  s.demand = mixed_demand(scale, duration, v);
  return std::make_shared<const sim::Model>(std::move(s));
}

}  // namespace fixture
