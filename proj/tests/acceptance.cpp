// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "fuzzsim/metrics.hpp"
#include "fuzzsim/scenario.hpp"
#include "platoon.hpp"
#include "sim_fixture.hpp"

using namespace fuzzsim;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string scenario_path(const std::string& name) { return std::string(FUZZSIM_SCENARIO_DIR) + "/" + name; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Mamdani min/max with a centroid over `points` grid points, written
/// without the library's inference or defuzzification code.
double brute_mamdani(const fuzzy::RuleBase& rb, const std::vector<double>& x, long long points) {
  const auto& out = rb.output();
  std::vector<double> act(out.size(), 0.0);
  for (const auto& rule : rb.rules()) {
    double w = 1.0;
    for (const auto& a : rule.antecedents) {
      const auto& var = rb.inputs()[rb.input_index(a.variable)];
      const double xi = std::clamp(x[rb.input_index(a.variable)], var.lo(), var.hi());
      w = std::min(w, var.term(var.term_index(a.term)).mf.degree(xi));
    }
    auto& slot = act[out.term_index(rule.consequent)];
    slot = std::max(slot, w);
  }
  std::vector<std::size_t> live;
  for (std::size_t t = 0; t < act.size(); ++t)
    if (act[t] > 0.0) live.push_back(t);
  const double h = out.width() / double(points - 1);
  double num = 0.0, den = 0.0;
  for (long long i = 0; i < points; ++i) {
    const double y = out.lo() + double(i) * h;
    double mu = 0.0;
    for (std::size_t t : live) mu = std::max(mu, std::min(act[t], out.term(t).mf.degree(y)));
    num += y * mu;
    den += mu;
  }
  return num / den;
}

Outcome fuzzy_oracle() {
  const auto t0 = Clock::now();
  const driver::CarFollowingModel cf;
  const auto& rb = cf.rulebase();
  const auto& dv = cf.dv_var();
  const auto& ds = cf.dssd_var();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> udv(dv.lo(), dv.hi()), uds(ds.lo(), ds.hi());
  const double tol = 1e-4 * rb.output().width();
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::vector<double> x{udv(rng), uds(rng)};
    const double got = rb.infer_crisp(std::span<const double>(x));
    worst = std::max(worst, std::abs(got - brute_mamdani(rb, x, 1'000'000)));
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "1000 pairs, max |infer_crisp - brute 1e6 grid| = " << worst << " (tol " << tol << "), " << secs << " s";
  return {worst <= tol && secs < 60.0, d.str()};
}

Outcome rule_pins() {
  const driver::CarFollowingModel cf;
  const driver::LaneChangeModel lc;
  const auto p = driver::DriverParams::motor_default();
  const double a = driver::following_acceleration(cf, cf.dv_var().peak("V2"), cf.dssd_var().peak("S4"), p);
  const double b = driver::following_acceleration(cf, cf.dv_var().peak("V3"), cf.dssd_var().peak("S3"), p);
  const double medium = lc.intention_var().peak("medium");
  const double c = driver::lcn_intention(lc, lc.pr_var().peak("PR1"), lc.gs_var().peak("GS3"));
  std::ostringstream d;
  d << "(V2,S4) -> " << a << ", (V3,S3) -> " << b << ", (PR1,GS3) -> " << c << " (medium peak " << medium << ")";
  return {a == 0.0 && b == 0.0 && std::abs(c - medium) < 1e-9, d.str()};
}

Outcome safety_suite() {
  const auto t0 = Clock::now();
  long runs = 0, red = 0, failures = 0, vehicles = 0;
  std::string first_error;
  for (int plan : {1, 2, 3}) {
    const auto model = fixture::mixed_model(plan);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      ++runs;
      try {
        // Every step checks spacing, speed bounds and conservation; a breach throws.
        const auto r = sim::run(model, seed);
        red += r.counters.red_violations;
        vehicles += r.counters.spawned;
        if (r.counters.spawned != r.counters.exited + r.counters.active + r.counters.buffered)
          ++failures;
      } catch (const SimulationError& e) {
        ++failures;
        if (first_error.empty()) first_error = e.what();
      }
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << runs << " one-hour runs, " << vehicles << " vehicles, " << failures << " invariant failures, " << red
    << " red-line violations, " << secs << " s";
  if (!first_error.empty()) d << " (first: " << first_error << ")";
  return {failures == 0 && red == 0 && secs < 600.0, d.str()};
}

Outcome plan_ordering() {
  std::vector<metrics::PlanRuns> plans;
  for (int p : {1, 2, 3}) {
    const auto s = scenario::load_scenario(scenario_path("huangshi_plan" + std::to_string(p) + ".json"));
    const auto model = std::make_shared<const sim::Model>(s.setup);
    // Same demand and network in every file; only the plan differs.
    metrics::PlanRuns pr{"plan" + std::to_string(p), "huangshi", {}};
    for (std::uint64_t seed = s.setup.params.seed; seed < s.setup.params.seed + 10; ++seed)
      pr.runs.push_back(metrics::summarize(sim::run(model, seed), model->network(), seed, s.setup.params.warmup));
    plans.push_back(std::move(pr));
  }
  const auto ranking = metrics::compare_plans(plans);
  std::map<std::string, const metrics::PlanRanking*> by;
  for (const auto& r : ranking) by[r.plan] = &r;
  const auto &p1 = *by["plan1"], &p2 = *by["plan2"], &p3 = *by["plan3"];
  std::ostringstream d;
  d << "median delay/speed over 10 seeds: plan1 " << p1.median_delay << " s/" << p1.median_speed << " m/s, plan2 "
    << p2.median_delay << "/" << p2.median_speed << ", plan3 " << p3.median_delay << "/" << p3.median_speed;
  const bool ok = p1.median_delay < p2.median_delay && p1.median_delay < p3.median_delay &&
                  p1.median_speed > p2.median_speed && p1.median_speed > p3.median_speed;
  return {ok, d.str()};
}

Outcome real_time() {
  const auto s = scenario::load_scenario(scenario_path("zgc_assess.json"));
  std::ifstream in(s.detectors);
  auto feed = metrics::read_detector_csv(in);
  double first_end = feed.front().t0 + s.assess.window;
  std::erase_if(feed, [&](const metrics::DetectorRecord& r) { return r.t1 > first_end + 1e-9; });
  const auto res = metrics::rolling_assess(feed, s.setup, s.assess);
  if (res.size() != 1 || res[0].gap) return {false, "first window of the shipped feed did not run"};
  const auto& w = res[0];
  std::ostringstream d;
  d << "900 s window (+" << s.assess.warmup << " s warm-up): " << w.wall_seconds << " wall s, " << w.speed_ratio
    << " simulated s per wall s";
  return {w.wall_seconds < 118.0 && w.speed_ratio >= 7.6, d.str()};
}

Outcome determinism() {
  const auto s = scenario::load_scenario(scenario_path("huangshi_plan1.json"));
  std::string out[2];
  for (auto& o : out) {
    const auto model = std::make_shared<const sim::Model>(s.setup);
    std::ostringstream os;
    metrics::write_moe_csv(os, metrics::aggregate_run(sim::run(model, 42), model->network(), s.moe_interval,
                                                      s.setup.params.warmup));
    o = os.str();
  }
  std::ostringstream d;
  d << "two runs of huangshi_plan1 seed 42: " << out[0].size() << " bytes of MOE CSV, "
    << (out[0] == out[1] ? "identical" : "different");
  return {out[0] == out[1] && !out[0].empty(), d.str()};
}

Outcome platoon_convergence() {
  const driver::CarFollowingModel cf;
  const auto r = platoon::run(cf, driver::DriverParams::motor_default(), 10, 300.0);
  std::ostringstream d;
  d << "10 followers after 300 s: max |DV| " << r.max_abs_dv << ", DSSD in [" << r.min_dssd << ", " << r.max_dssd
    << "]";
  return {r.max_abs_dv < 0.1 && r.min_dssd >= 0.8 && r.max_dssd <= 1.2, d.str()};
}

Outcome assessment_identity() {
  const auto model = fixture::mixed_model(1, 1.0, 1800.0);
  const auto run = sim::run(model, 8);
  const auto windows = metrics::aggregate_run(run, model->network(), 900.0);
  bool identity = true;
  for (const auto& w : windows) {
    const auto a = metrics::assess_window(metrics::detector_view(w), w);
    identity = identity && a.verdict == metrics::Verdict::normal && a.volume_deviation == 0.0 &&
               a.speed_deviation == 0.0;
  }
  auto observed = metrics::detector_view(windows.back());
  for (auto& r : observed) r.volume *= 2.0;
  metrics::AssessConfig cfg;
  cfg.volume_threshold = 0.25;
  const auto b = metrics::assess_window(observed, windows.back(), cfg);
  const bool boundary = b.verdict == metrics::Verdict::divergent && b.offending == std::vector<std::string>{"volume"};
  std::ostringstream d;
  d << "identity " << (identity ? "normal" : "NOT normal") << " on " << windows.size()
    << " windows; 2x volume -> " << metrics::to_string(b.verdict) << " on";
  for (const auto& m : b.offending) d << " " << m;
  d << " (volume deviation " << b.volume_deviation << ")";
  return {identity && boundary, d.str()};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"fuzzy oracle equivalence", fuzzy_oracle},
      {"rule pins", rule_pins},
      {"safety and conservation", safety_suite},
      {"plan ordering", plan_ordering},
      {"real-time assessment", real_time},
      {"determinism", determinism},
      {"platoon stability", platoon_convergence},
      {"assessment identity and boundary", assessment_identity},
  };
  int failed = 0, n = 0;
  for (const auto& [name, fn] : criteria) {
    ++n;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %d %s: %s -- %s\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
