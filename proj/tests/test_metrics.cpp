#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "fuzzsim/errors.hpp"
#include "fuzzsim/metrics.hpp"
#include "sim_fixture.hpp"

using namespace fuzzsim;
using namespace fuzzsim::metrics;

namespace {

const net::Network& cross() {
  static const net::Network n = net::standard_cross_intersection();
  return n;
}

sim::VehicleRecord rec(const std::string& movement, double entry, double exit, double ff, double distance = 300.0) {
  sim::VehicleRecord r;
  r.movement = movement;
  r.approach = cross().movements[std::size_t(cross().movement_index(movement))].from_link;
  r.entry = entry;
  r.stop_line = entry + 10.0;
  r.exit = exit;
  r.distance = distance;
  r.free_flow_time = ff;
  return r;
}

sim::RunResult synthetic(std::vector<sim::VehicleRecord> recs, double end = 900.0) {
  sim::RunResult r;
  r.records = std::move(recs);
  r.end = end;
  for (std::size_t l = 0; l < cross().links.size(); ++l)
    if (cross().links[l].role == net::LinkRole::approach) r.approach_links.push_back(int(l));
  return r;
}

RunSummary summary(std::uint64_t seed, double delay, double speed) {
  RunSummary s;
  s.seed = seed;
  s.avg_delay = delay;
  s.avg_speed = speed;
  return s;
}

IntervalMOE moe_with(const std::map<std::string, std::pair<long, double>>& by_approach, double t0 = 0,
                     double t1 = 900) {
  IntervalMOE m;
  m.t0 = t0;
  m.t1 = t1;
  for (const auto& [k, v] : by_approach) {
    m.approaches[k].throughput = v.first;
    m.approaches[k].avg_speed = v.second;
  }
  return m;
}

}  // namespace

TEST_CASE("control_delay") {
  CHECK(control_delay(rec("NB_T", 0, 30, 30), 30) == 0.0);
  CHECK(control_delay(rec("NB_T", 10, 100, 30), 30) == doctest::Approx(60.0));
  CHECK(control_delay(rec("NB_T", 0, 20, 30), 30) == 0.0);
  CHECK(control_delay(rec("NB_T", 0, 90, 30)) == doctest::Approx(60.0));
  CHECK_THROWS_AS(control_delay(rec("NB_T", 0, 90, 30), 0.0), InputError);
  CHECK_THROWS_AS(control_delay(rec("NB_T", 0, 90, -1)), InputError);
}

TEST_CASE("aggregate_interval examples") {
  SUBCASE("no exits is flagged empty") {
    const auto m = aggregate_interval(synthetic({}), cross(), 0, 900);
    CHECK(m.empty);
    CHECK(m.network.throughput == 0);
    CHECK(m.network.avg_delay == 0.0);
    CHECK(m.approaches.size() == 4);
  }
  SUBCASE("one vehicle with 60 s delay") {
    const auto m = aggregate_interval(synthetic({rec("NB_T", 0, 90, 30)}), cross(), 0, 900);
    CHECK_FALSE(m.empty);
    CHECK(m.network.avg_delay == doctest::Approx(60.0));
    CHECK(m.approaches.at("NB_in").throughput == 1);
    CHECK(m.movements.at("NB_T").avg_travel_time == doctest::Approx(90.0));
  }
  SUBCASE("two vehicles with 30 and 60 s delay") {
    const auto m = aggregate_interval(synthetic({rec("NB_T", 0, 60, 30), rec("WB_L", 0, 90, 30)}), cross(), 0, 900);
    CHECK(m.network.avg_delay == doctest::Approx(45.0));
    CHECK(m.network.throughput == 2);
  }
  SUBCASE("space-mean speed is total distance over total time") {
    const auto m =
        aggregate_interval(synthetic({rec("NB_T", 0, 20, 10, 200), rec("NB_T", 0, 80, 10, 400)}), cross(), 0, 900);
    CHECK(m.network.avg_speed == doctest::Approx(6.0));
  }
  SUBCASE("exits are assigned to half-open intervals") {
    const auto run = synthetic({rec("NB_T", 0, 450, 30), rec("NB_T", 0, 899.5, 30), rec("NB_T", 0, 900, 30)});
    CHECK(aggregate_interval(run, cross(), 0, 450).network.throughput == 0);
    CHECK(aggregate_interval(run, cross(), 450, 900).network.throughput == 3);  // closes the run
  }
  SUBCASE("queue samples average and max") {
    auto run = synthetic({});
    for (int k = 1; k <= 4; ++k) run.queues.push_back({5.0 * k, {k, 0, 0, 1}});
    const auto m = aggregate_interval(run, cross(), 0, 20);
    CHECK(m.network.avg_queue == doctest::Approx(3.5));
    CHECK(m.network.max_queue == 5);
    CHECK(m.approaches.at(cross().links[std::size_t(run.approach_links[0])].id).max_queue == 4);
  }
  CHECK_THROWS_AS(aggregate_interval(synthetic({}), cross(), 10, 10), InputError);
}

TEST_CASE("interval MOEs of a mixed run") {
  const auto model = fixture::mixed_model(1, 1.0, 1200.0);
  const auto run = sim::run(model, 3);
  const auto intervals = aggregate_run(run, model->network(), 300.0);
  REQUIRE(intervals.size() == 4);
  long total = 0;
  for (const auto& m : intervals) {
    CHECK(m.t1 > m.t0);
    total += m.network.throughput;
    auto check_group = [](const GroupMOE& g) {
      CHECK(g.avg_queue <= double(g.max_queue) + 1e-12);
      CHECK(g.avg_delay >= 0.0);
      CHECK(g.avg_speed >= 0.0);
      CHECK(g.avg_travel_time >= 0.0);
    };
    check_group(m.network);
    for (const auto& [k, g] : m.approaches) check_group(g);
    for (const auto& [k, g] : m.movements) check_group(g);
  }
  CHECK(total == run.counters.exited);
  CHECK(total == long(run.records.size()));

  const auto s = summarize(run, model->network(), 3);
  CHECK(s.throughput == total);
  CHECK(s.avg_delay > 0.0);

  const auto cap = road_capacity(run, *model);
  CHECK(cap.size() == 4);
  for (const auto& [k, c] : cap) {
    INFO(k << " " << c);
    CHECK(c > 0.0);
    CHECK(c < 3.0 * 3600.0);
  }
}

TEST_CASE("aggregate_run honours the warm-up") {
  const auto run = synthetic({rec("NB_T", 0, 100, 30), rec("NB_T", 0, 400, 30)}, 900);
  const auto v = aggregate_run(run, cross(), 300, 300);
  REQUIRE(v.size() == 2);
  CHECK(v[0].t0 == 300.0);
  CHECK(v[0].network.throughput == 1);
  CHECK(summarize(run, cross(), 1, 300).throughput == 1);
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK_THROWS_AS(median({}), InputError);
}

TEST_CASE("compare_plans") {
  const std::vector<PlanRuns> base = {
      {"plan1", "s", {summary(1, 30, 5), summary(2, 50, 4), summary(3, 40, 6)}},
      {"plan2", "s", {summary(1, 60, 3), summary(2, 20, 7), summary(3, 70, 2)}},
      {"plan3", "s", {summary(1, 45, 4), summary(2, 45, 4), summary(3, 45, 4)}},
  };
  const auto r = compare_plans(base);
  REQUIRE(r.size() == 3);
  CHECK(r[0].plan == "plan1");
  CHECK(r[0].median_delay == 40.0);
  CHECK(r[0].median_speed == 5.0);
  CHECK(r[1].plan == "plan3");
  CHECK(r[2].plan == "plan2");
  CHECK(r[2].rank == 3);

  SUBCASE("ranking is invariant under permutation") {
    auto perm = base;
    std::mt19937 rng(9);
    for (int k = 0; k < 10; ++k) {
      std::shuffle(perm.begin(), perm.end(), rng);
      const auto q = compare_plans(perm);
      for (std::size_t i = 0; i < q.size(); ++i) CHECK(q[i].plan == r[i].plan);
    }
  }
  SUBCASE("ties are broken by name") {
    const std::vector<PlanRuns> tied = {{"b", "s", {summary(1, 0, 0)}}, {"a", "s", {summary(1, 0, 0)}}};
    const auto q = compare_plans(tied);
    CHECK(q[0].plan == "a");
    CHECK(q[1].plan == "b");
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(compare_plans({base[0]}), InputError);
    auto other = base;
    other[1].scenario = "t";
    CHECK_THROWS_AS(compare_plans(other), InputError);
    other = base;
    other[2].runs[1].seed = 9;
    CHECK_THROWS_AS(compare_plans(other), InputError);
    other = base;
    other[2].runs.pop_back();
    CHECK_THROWS_AS(compare_plans(other), InputError);
    other = base;
    other[1].plan = "plan1";
    CHECK_THROWS_AS(compare_plans(other), InputError);
  }
  SUBCASE("plot data") {
    std::ostringstream os;
    write_plot_csv(os, r);
    CHECK(os.str().rfind("plan,avg_speed,avg_delay\nplan1,5.000000,40.000000\n", 0) == 0);
  }
}

TEST_CASE("zero demand ties every plan at zero delay") {
  std::vector<PlanRuns> plans;
  for (int p : {1, 2, 3}) {
    sim::Setup s;
    s.network = cross();
    s.plan = signal::builtin_plan(p, cross());
    s.demand.end = 600;
    const auto model = std::make_shared<const sim::Model>(std::move(s));
    PlanRuns pr{"plan" + std::to_string(p), "empty", {}};
    for (std::uint64_t seed : {1, 2}) pr.runs.push_back(summarize(sim::run(model, seed), cross(), seed));
    plans.push_back(pr);
  }
  const auto r = compare_plans(plans);
  for (const auto& p : r) CHECK(p.median_delay == 0.0);
  CHECK(r[0].plan == "plan1");
}

TEST_CASE("detector csv") {
  const std::string text = std::string(kDetectorHeader) +
                           "\n0,900,NB_in,120,8.5,0.12\r\n900,1800,NB_in,130,8.1,0.15\n";
  std::istringstream in(text);
  const auto recs = read_detector_csv(in);
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].t0 == 900.0);
  CHECK(recs[1].approach == "NB_in");
  CHECK(recs[1].volume == 130.0);
  CHECK(recs[1].occupancy == doctest::Approx(0.15));

  std::ostringstream out;
  write_detector_csv(out, recs);
  std::istringstream back(out.str());
  const auto again = read_detector_csv(back);
  REQUIRE(again.size() == 2);
  CHECK(again[0].avg_speed == recs[0].avg_speed);

  auto fails_at = [](const std::string& body, const std::string& where) {
    std::istringstream s(body);
    try {
      read_detector_csv(s);
    } catch (const InputError& e) {
      return std::string(e.what()).find(where) != std::string::npos;
    }
    return false;
  };
  const std::string h = std::string(kDetectorHeader) + "\n";
  CHECK(fails_at("a,b\n", "line 1"));
  CHECK(fails_at("", "missing header"));
  CHECK(fails_at(h + "0,900,NB_in,1,1,0\n0,900,NB_in,x,1,0\n", "line 3"));
  CHECK(fails_at(h + "0,900,NB_in,1,1\n", "6 fields"));
  CHECK(fails_at(h + "0,900,NB_in,-1,1,0\n", "negative volume"));
  CHECK(fails_at(h + "0,900,NB_in,1,1,1.5\n", "occupancy"));
  CHECK(fails_at(h + "900,0,NB_in,1,1,0.5\n", "interval_end"));
}

TEST_CASE("assess_window") {
  const auto sim = moe_with({{"NB_in", {100, 8.0}}, {"SB_in", {80, 9.0}}});

  SUBCASE("identity is normal with zero deviation") {
    const auto a = assess_window(detector_view(sim), sim);
    CHECK(a.verdict == Verdict::normal);
    CHECK(a.volume_deviation == 0.0);
    CHECK(a.speed_deviation == 0.0);
    CHECK(a.offending.empty());
  }
  SUBCASE("double the volume diverges on volume only") {
    auto obs = detector_view(moe_with({{"NB_in", {50, 8.0}}, {"SB_in", {80, 9.0}}}));
    obs[0].volume = 100;
    const auto a = assess_window(obs, moe_with({{"NB_in", {50, 8.0}}, {"SB_in", {80, 9.0}}}));
    CHECK(a.verdict == Verdict::divergent);
    CHECK(a.volume_deviation == doctest::Approx(0.5));
    CHECK(a.offending == std::vector<std::string>{"volume"});
  }
  SUBCASE("deviation exactly at the threshold stays normal") {
    auto obs = detector_view(sim);
    obs[0].volume = 80;  // |80 - 100| / 80 = 0.25
    obs[0].avg_speed = 8.0 / 0.75;  // |s - 8| / s = 0.25
    const auto a = assess_window(obs, sim);
    CHECK(a.volume_deviation == doctest::Approx(0.25));
    CHECK(a.speed_deviation == doctest::Approx(0.25));
    CHECK(a.verdict == Verdict::normal);
    AssessConfig tight;
    tight.speed_threshold = 0.2;
    const auto b = assess_window(obs, sim, tight);
    CHECK(b.offending == std::vector<std::string>{"speed"});
  }
  SUBCASE("epsilon guards small observations") {
    auto obs = detector_view(moe_with({{"NB_in", {0, 0.0}}, {"SB_in", {80, 9.0}}}));
    const auto a = assess_window(obs, moe_with({{"NB_in", {1, 5.0}}, {"SB_in", {80, 9.0}}}));
    CHECK(a.volume_deviation == doctest::Approx(1.0));
    CHECK(a.speed_deviation == 0.0);
  }
  SUBCASE("mismatches raise") {
    auto obs = detector_view(sim);
    obs[0].t1 = 901;
    CHECK_THROWS_AS(assess_window(obs, sim), InputError);
    obs = detector_view(sim);
    obs[0].approach = "EB_in";
    CHECK_THROWS_AS(assess_window(obs, sim), InputError);
    obs = detector_view(sim);
    obs.push_back(obs[0]);
    CHECK_THROWS_AS(assess_window(obs, sim), InputError);
  }
}

TEST_CASE("identity holds for random simulated windows") {
  std::mt19937 rng(17);
  std::uniform_int_distribution<long> vol(0, 400);
  std::uniform_real_distribution<double> spd(0.0, 20.0);
  for (int k = 0; k < 200; ++k) {
    const auto m = moe_with({{"NB_in", {vol(rng), spd(rng)}}, {"WB_in", {vol(rng), spd(rng)}}}, 900.0 * k,
                            900.0 * (k + 1));
    CHECK(assess_window(detector_view(m), m).verdict == Verdict::normal);
  }
}

TEST_CASE("demand from detector volumes keeps template shares") {
  const auto tmpl = fixture::mixed_demand();
  std::vector<DetectorRecord> obs = {{900, 1800, "NB_in", 170, 8, 0.1}, {900, 1800, "EB_in", 0, 0, 0}};
  const auto d = demand_from_detectors(obs, tmpl, cross(), 900, 1800, 300);
  CHECK(d.start == 600.0);
  CHECK(d.end == 1800.0);
  CHECK(d.validate(cross()).empty());
  double nb = 0, nb_t = 0, eb = 0;
  int peds = 0;
  for (const auto& s : d.streams) {
    if (s.cls == net::StreamClass::pedestrian) {
      ++peds;
      continue;
    }
    const auto& mv = cross().movements[std::size_t(cross().movement_index(s.movement))];
    if (cross().links[std::size_t(mv.from_link)].id == "NB_in") nb += s.rates[0];
    if (cross().links[std::size_t(mv.from_link)].id == "EB_in") eb += s.rates[0];
    if (s.movement == "NB_T") nb_t = s.rates[0];
  }
  CHECK(peds == 4);
  CHECK(nb == doctest::Approx(170 * 4.0));
  CHECK(nb_t == doctest::Approx(680.0 * 220.0 / 680.0));
  CHECK(eb == 0.0);
  obs[0].approach = "NB_out";
  CHECK_THROWS_AS(demand_from_detectors(obs, tmpl, cross(), 900, 1800, 300), InputError);
}

TEST_CASE("rolling assessment") {
  sim::Setup tmpl;
  tmpl.network = cross();
  tmpl.plan = signal::builtin_plan(1, cross());
  tmpl.demand = fixture::mixed_demand(0.5);

  SUBCASE("empty feed gives no results") { CHECK(rolling_assess({}, tmpl).empty()); }

  SUBCASE("an hour of feed gives four windows, with a gap marker") {
    std::vector<DetectorRecord> feed;
    for (int w = 0; w < 4; ++w)
      for (const char* a : {"NB_in", "SB_in", "EB_in", "WB_in"}) {
        if (w == 2 && std::string(a) == "EB_in") continue;
        // Two 450 s records per window exercise the tiling path.
        feed.push_back({900.0 * w, 900.0 * w + 450, a, 40, 7.0, 0.1});
        feed.push_back({900.0 * w + 450, 900.0 * (w + 1), a, 40, 7.0, 0.1});
      }
    RollingOptions opt;
    opt.warmup = 120;
    const auto res = rolling_assess(feed, tmpl, opt);
    REQUIRE(res.size() == 4);
    for (int w = 0; w < 4; ++w) {
      CHECK(res[std::size_t(w)].t0 == 900.0 * w);
      CHECK(res[std::size_t(w)].gap == (w == 2));
    }
    for (const auto& r : res) {
      if (r.gap) continue;
      CHECK(r.speed_ratio > 0.0);
      CHECK(r.simulated_seconds == 1020.0);
      CHECK(r.assessment.approaches.size() == 4);
      for (const auto& a : r.assessment.approaches) CHECK(a.observed_volume == 80.0);
    }
    std::ostringstream os;
    write_assessment_csv(os, res);
    CHECK(os.str().find(",1,gap,") != std::string::npos);
  }
}

TEST_CASE("MOE csv is stable across identical runs") {
  const auto model = fixture::mixed_model(2, 1.0, 600.0);
  std::string out[2];
  for (auto& o : out) {
    std::ostringstream os;
    write_moe_csv(os, aggregate_run(sim::run(model, 11), model->network(), 300.0));
    o = os.str();
  }
  CHECK(out[0] == out[1]);
  CHECK(out[0].rfind("t0,t1,scope,id,empty,throughput,", 0) == 0);
}
