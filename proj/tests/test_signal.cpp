#include <doctest.h>

#include <cmath>

#include "fuzzsim/errors.hpp"
#include "fuzzsim/network.hpp"
#include "fuzzsim/signal.hpp"

using namespace fuzzsim;
using namespace fuzzsim::signal;

namespace {

const net::Network& cross() {
  static const net::Network n = net::standard_cross_intersection();
  return n;
}

PhasePlan four_by_thirty() {
  PhasePlan p;
  p.intergreen = 3;
  const char* ids[] = {"NB_T", "WB_T", "SB_T", "EB_T"};
  for (const char* id : ids) p.phases.push_back({id, 30.0, {id}, {}});
  p.uncontrolled = {"NB_R"};
  return p;
}

}  // namespace

TEST_CASE("signal_state examples") {
  const auto p = four_by_thirty();
  CHECK(p.cycle() == 132.0);
  auto s = signal_state(p, 0);
  CHECK(s.phase == 0);
  CHECK(s.green.count("NB_T") == 1);
  s = signal_state(p, 31);
  CHECK(s.phase == -1);
  CHECK(s.green == std::set<std::string>{"NB_R"});
  CHECK(s.permissive == std::set<std::string>{"NB_R"});
  s = signal_state(p, 33);
  CHECK(s.phase == 1);
  const auto a = signal_state(p, 0);
  const auto b = signal_state(p, p.cycle());
  CHECK(a.phase == b.phase);
  CHECK(a.green == b.green);
}

TEST_CASE("signal_state is periodic on a 1 ms grid") {
  for (int which : {1, 2, 3}) {
    const auto plan = builtin_plan(which, cross());
    const CompiledPlan cp(plan, cross());
    const long long cycle_ms = std::llround(plan.cycle() * 1000);
    const int nm = cross().movement_index("NB_T");
    for (long long k = 0; k < cycle_ms * 2; ++k) {
      const double t = double(k) / 1000.0;
      const double t2 = double(k + cycle_ms) / 1000.0;
      const auto s1 = signal_state(plan, t);
      const auto s2 = signal_state(plan, t2);
      if (s1.phase != s2.phase) {
        FAIL("phase differs at t=" << t << " for plan " << which);
        break;
      }
      if (cp.phase_at(t) != s1.phase || cp.is_green(nm, t) != (s1.green.count("NB_T") == 1)) {
        FAIL("compiled plan disagrees at t=" << t);
        break;
      }
    }
  }
}

TEST_CASE("accumulated green per cycle equals phase greens") {
  for (int which : {1, 2, 3}) {
    const auto plan = builtin_plan(which, cross());
    const CompiledPlan cp(plan, cross());
    const long long cycle_ms = std::llround(plan.cycle() * 1000);
    for (std::size_t m = 0; m < cross().movements.size(); ++m) {
      if (cp.uncontrolled(int(m)) || cp.twice_crossing(int(m))) continue;
      double expected = 0.0;
      for (const auto& ph : plan.phases)
        if (std::find(ph.permitted.begin(), ph.permitted.end(), cross().movements[m].id) != ph.permitted.end())
          expected += ph.green;
      long long green_ms = 0;
      for (long long k = 0; k < cycle_ms; ++k) green_ms += cp.is_green(int(m), (double(k) + 0.5) / 1000.0);
      CHECK(double(green_ms) / 1000.0 == doctest::Approx(expected));
    }
  }
}

TEST_CASE("green_remaining") {
  const auto plan = builtin_plan(1, cross());
  const CompiledPlan cp(plan, cross());
  const int nb_t = cross().movement_index("NB_T");
  CHECK(cp.green_remaining(nb_t, 0.0) == doctest::Approx(25.0));
  CHECK(cp.green_remaining(nb_t, 10.0) == doctest::Approx(15.0));
  CHECK(cp.green_remaining(nb_t, 26.0) == 0.0);
  CHECK(std::isinf(cp.green_remaining(cross().movement_index("NB_R"), 26.0)));
  CHECK(cp.indication(cross().movement_index("NB_R"), 26.0) == Indication::permissive_green);
  CHECK(cp.indication(cross().movement_index("WB_T"), 0.0) == Indication::red);
}

TEST_CASE("built-in plans") {
  CHECK(builtin_plan(1, cross()).phases.size() == 4);
  CHECK(builtin_plan(2, cross()).phases.size() == 4);
  CHECK(builtin_plan(3, cross()).phases.size() == 2);
  CHECK(builtin_plan(1, cross()).cycle() == 112.0);
  CHECK(builtin_plan(2, cross()).cycle() == 112.0);
  CHECK(builtin_plan(3, cross()).cycle() == 96.0);
  CHECK(builtin_plan("plan2", cross()).name == "plan2");
  CHECK_THROWS_AS(builtin_plan(4, cross()), InputError);
  CHECK_THROWS_AS(builtin_plan(1, cross(), {10, 10}), InputError);
  CHECK_THROWS_AS(builtin_plan(1, net::Network{}), InputError);
  for (int which : {1, 2}) {
    const auto bad = validate_plan(builtin_plan(which, cross()), cross());
    INFO("plan " << which << ": " << (bad.empty() ? "" : bad.front()));
    CHECK(bad.empty());
  }
  CHECK(validate_plan(builtin_plan(3, cross()), cross()).empty());
}

TEST_CASE("plan 3 relies on permissive conflicts") {
  const auto plan = builtin_plan(3, cross());
  int permissive_conflicts = 0;
  for (const auto& ph : plan.phases) {
    auto in = [&](const std::vector<std::string>& v, int m) {
      return std::find(v.begin(), v.end(), cross().movements[std::size_t(m)].id) != v.end();
    };
    for (const auto& c : cross().conflicts)
      if (in(ph.permitted, c.movement_a) && in(ph.permitted, c.movement_b) &&
          (in(ph.permissive, c.movement_a) || in(ph.permissive, c.movement_b)))
        ++permissive_conflicts;
  }
  CHECK(permissive_conflicts > 0);
}

TEST_CASE("validate_plan violations") {
  SUBCASE("empty plan") {
    CHECK_FALSE(validate_plan(PhasePlan{}, cross()).empty());
  }
  SUBCASE("protected left with oncoming protected through") {
    auto plan = builtin_plan(2, cross());
    plan.phases[0].permitted.push_back("NB_L");
    CHECK_FALSE(validate_plan(plan, cross()).empty());
  }
  SUBCASE("permissive not permitted") {
    auto plan = builtin_plan(1, cross());
    plan.phases[0].permissive.push_back("WB_T");
    CHECK_FALSE(validate_plan(plan, cross()).empty());
  }
  SUBCASE("movement never served") {
    auto plan = builtin_plan(1, cross());
    plan.uncontrolled.pop_back();
    CHECK_FALSE(validate_plan(plan, cross()).empty());
  }
  SUBCASE("unknown movement") {
    auto plan = builtin_plan(1, cross());
    plan.phases[0].permitted.push_back("XX_T");
    CHECK_FALSE(validate_plan(plan, cross()).empty());
  }
  SUBCASE("zero green") {
    auto plan = builtin_plan(1, cross());
    plan.phases[1].green = 0;
    CHECK_FALSE(validate_plan(plan, cross()).empty());
    CHECK_THROWS_AS(CompiledPlan(plan, cross()), ValidationError);
  }
}
