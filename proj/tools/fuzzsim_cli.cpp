// fuzzsim command-line interface: run, compare, assess, validate.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fuzzsim/metrics.hpp"
#include "fuzzsim/scenario.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fuzzsim;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

std::string default_out() {
  const char* env = std::getenv("FUZZSIM_OUT_DIR");
  return env && *env ? env : "fuzzsim_out";
}

/// Write through a temporary file and rename, so readers never see a partial file.
void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

json group_json(const metrics::GroupMOE& g) {
  return {{"throughput", g.throughput},       {"avg_delay", g.avg_delay}, {"avg_speed", g.avg_speed},
          {"avg_travel_time", g.avg_travel_time}, {"avg_queue", g.avg_queue}, {"max_queue", g.max_queue}};
}

json moe_json(const std::vector<metrics::IntervalMOE>& v) {
  json out = json::array();
  for (const auto& m : v) {
    json j = {{"t0", m.t0}, {"t1", m.t1}, {"empty", m.empty}, {"network", group_json(m.network)}};
    for (const auto& [k, g] : m.approaches) j["approaches"][k] = group_json(g);
    for (const auto& [k, g] : m.movements) j["movements"][k] = group_json(g);
    out.push_back(j);
  }
  return out;
}

int cmd_validate(const std::string& path) {
  const auto s = scenario::load_scenario(path);
  std::cout << path << ": ok (" << s.name << ", plan " << s.plan_ref << ", seed " << s.setup.params.seed
            << (s.seed_defaulted ? " default" : "") << ")\n";
  return kOk;
}

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed_opt, const std::string& out_dir) {
  auto s = scenario::load_scenario(path);
  const std::uint64_t seed = seed_opt.value_or(s.setup.params.seed);
  const auto model = std::make_shared<const sim::Model>(s.setup);
  const auto run = sim::run(model, seed);
  const auto intervals = metrics::aggregate_run(run, model->network(), s.moe_interval, s.setup.params.warmup);
  const fs::path dir(out_dir);

  std::ostringstream moe, recs, events, cap;
  metrics::write_moe_csv(moe, intervals);
  metrics::write_records_csv(recs, run.records);
  for (const auto& e : run.events) sim::write_event(events, e);
  cap << "approach,saturation_flow_per_green_hour\n";
  for (const auto& [k, c] : metrics::road_capacity(run, *model)) cap << k << ',' << c << '\n';
  write_file(dir / "moe.csv", moe.str());
  write_file(dir / "moe.json", moe_json(intervals).dump(2) + "\n");
  write_file(dir / "records.csv", recs.str());
  write_file(dir / "events.log", events.str());
  write_file(dir / "capacity.csv", cap.str());
  write_file(dir / "manifest.json", scenario::manifest_json(s, seed, "run"));

  const auto sum = metrics::summarize(run, model->network(), seed, s.setup.params.warmup);
  std::cout << "run " << s.name << " seed " << seed << ": " << run.counters.exited << " exited, avg delay "
            << sum.avg_delay << " s, avg speed " << sum.avg_speed << " m/s, red violations "
            << run.counters.red_violations << ", wall " << run.wall_seconds << " s -> " << dir.string() << "\n";
  return kOk;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_compare(const std::string& path, const std::string& plans_arg, int seeds, unsigned jobs,
                const std::string& out_dir) {
  const auto base = scenario::load_scenario(path);
  const auto names = split_list(plans_arg);
  if (seeds < 1) throw InputError("--seeds must be >= 1");
  std::vector<std::shared_ptr<const sim::Model>> models;
  std::vector<scenario::Scenario> variants;
  for (const auto& n : names) {
    variants.push_back(scenario::with_builtin_plan(base, n));
    models.push_back(std::make_shared<const sim::Model>(variants.back().setup));
  }
  std::vector<metrics::PlanRuns> results(names.size());
  for (std::size_t p = 0; p < names.size(); ++p) {
    results[p].plan = names[p];
    results[p].scenario = base.hash;
    results[p].runs.resize(std::size_t(seeds));
  }
  // (plan, seed) jobs run concurrently; each writes only its own slot.
  const std::size_t total = names.size() * std::size_t(seeds);
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr err;
  auto worker = [&] {
    for (std::size_t k; (k = next++) < total;) {
      const std::size_t p = k / std::size_t(seeds), i = k % std::size_t(seeds);
      const std::uint64_t seed = base.setup.params.seed + i;
      try {
        const auto run = sim::run(models[p], seed);
        results[p].runs[i] = metrics::summarize(run, models[p]->network(), seed, base.setup.params.warmup);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < std::min<std::size_t>(jobs, total); ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);

  const auto ranking = metrics::compare_plans(results);
  const fs::path dir(out_dir);
  std::ostringstream rank_csv, plot_csv, runs_csv;
  metrics::write_ranking_csv(rank_csv, ranking);
  metrics::write_plot_csv(plot_csv, ranking);
  runs_csv << "plan,seed,throughput,avg_delay,avg_speed,avg_travel_time,avg_queue,max_queue\n";
  for (const auto& pr : results)
    for (const auto& r : pr.runs)
      runs_csv << pr.plan << ',' << r.seed << ',' << r.throughput << ',' << r.avg_delay << ',' << r.avg_speed << ','
               << r.avg_travel_time << ',' << r.avg_queue << ',' << r.max_queue << '\n';
  json rj = json::array();
  for (const auto& r : ranking)
    rj.push_back({{"rank", r.rank},
                  {"plan", r.plan},
                  {"median_delay", r.median_delay},
                  {"median_speed", r.median_speed},
                  {"delays", r.delays},
                  {"speeds", r.speeds}});
  write_file(dir / "ranking.csv", rank_csv.str());
  write_file(dir / "ranking.json", rj.dump(2) + "\n");
  write_file(dir / "plot_data.csv", plot_csv.str());
  write_file(dir / "runs.csv", runs_csv.str());
  write_file(dir / "manifest.json", scenario::manifest_json(base, base.setup.params.seed,
                                                            "compare --plans " + plans_arg + " --seeds " +
                                                                std::to_string(seeds)));
  for (const auto& r : ranking)
    std::cout << r.rank << ". " << r.plan << ": median delay " << r.median_delay << " s, median speed "
              << r.median_speed << " m/s\n";
  return kOk;
}

int cmd_assess(const std::string& path, const std::string& detectors, std::optional<double> window,
               const std::string& out_dir) {
  const auto s = scenario::load_scenario(path);
  const std::string feed_path = detectors.empty() ? s.detectors : detectors;
  if (feed_path.empty()) throw InputError("no detector feed: pass --detectors or set assessment.detectors");
  std::ifstream in(feed_path);
  if (!in) throw InputError("cannot read detector feed '" + feed_path + "'");
  const auto feed = metrics::read_detector_csv(in);
  auto opt = s.assess;
  if (window) opt.window = *window;
  const auto res = metrics::rolling_assess(feed, s.setup, opt);

  std::ostringstream csv;
  metrics::write_assessment_csv(csv, res);
  json j = json::array();
  for (const auto& w : res) {
    json e = {{"t0", w.t0}, {"t1", w.t1}, {"gap", w.gap}};
    if (!w.gap) {
      e["verdict"] = metrics::to_string(w.assessment.verdict);
      e["volume_deviation"] = w.assessment.volume_deviation;
      e["speed_deviation"] = w.assessment.speed_deviation;
      e["offending"] = w.assessment.offending;
      e["simulated_seconds"] = w.simulated_seconds;
      e["wall_seconds"] = w.wall_seconds;
      e["speed_ratio"] = w.speed_ratio;
      for (const auto& a : w.assessment.approaches)
        e["approaches"][a.approach] = {{"observed_volume", a.observed_volume},
                                       {"simulated_volume", a.simulated_volume},
                                       {"volume", a.volume},
                                       {"observed_speed", a.observed_speed},
                                       {"simulated_speed", a.simulated_speed},
                                       {"speed", a.speed}};
    }
    j.push_back(e);
  }
  const fs::path dir(out_dir);
  write_file(dir / "assessment.csv", csv.str());
  write_file(dir / "assessment.json", j.dump(2) + "\n");
  write_file(dir / "manifest.json", scenario::manifest_json(s, opt.seed, "assess --detectors " + feed_path));
  for (const auto& w : res) {
    std::cout << "[" << w.t0 << ", " << w.t1 << ") ";
    if (w.gap) {
      std::cout << "gap\n";
      continue;
    }
    std::cout << metrics::to_string(w.assessment.verdict) << " volume " << w.assessment.volume_deviation
              << " speed " << w.assessment.speed_deviation << " ratio " << w.speed_ratio << "x\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fuzzsim: fuzzy-logic microsimulation of a signalised intersection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FUZZSIM_VERSION);

  std::string scenario_path, out_dir = default_out(), plans = "plan1,plan2,plan3", detectors;
  std::optional<std::uint64_t> seed;
  std::optional<double> window;
  int seeds = 10;
  unsigned jobs = 0;

  auto* run = app.add_subcommand("run", "one simulation; writes MOEs, records, events and a manifest");
  run->add_option("scenario", scenario_path, "scenario file")->required();
  run->add_option("--seed", seed, "random seed (default: the scenario's)");
  run->add_option("--out", out_dir, "output directory (env FUZZSIM_OUT_DIR)");

  auto* cmp = app.add_subcommand("compare", "multi-plan, multi-seed comparison");
  cmp->add_option("scenario", scenario_path, "scenario file")->required();
  cmp->add_option("--plans", plans, "comma-separated built-in plans");
  cmp->add_option("--seeds", seeds, "seeds per plan, counting up from the scenario seed");
  cmp->add_option("--jobs", jobs, "worker threads (0: all cores)");
  cmp->add_option("--out", out_dir, "output directory (env FUZZSIM_OUT_DIR)");

  auto* as = app.add_subcommand("assess", "rolling assessment against a detector feed");
  as->add_option("scenario", scenario_path, "scenario file")->required();
  as->add_option("--detectors", detectors, "detector CSV (default: the scenario's)");
  as->add_option("--window", window, "window length in s");
  as->add_option("--out", out_dir, "output directory (env FUZZSIM_OUT_DIR)");

  auto* val = app.add_subcommand("validate", "check a scenario; exit 0 when valid, 1 otherwise");
  val->add_option("scenario", scenario_path, "scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kRuntime;
  }

  try {
    if (*val) return cmd_validate(scenario_path);
    if (*run) return cmd_run(scenario_path, seed, out_dir);
    if (*cmp) return cmd_compare(scenario_path, plans, seeds, jobs, out_dir);
    if (*as) return cmd_assess(scenario_path, detectors, window, out_dir);
  } catch (const ValidationError& e) {
    std::cerr << "invalid scenario:\n";
    for (const auto& v : e.violations()) std::cerr << "  - " << v << "\n";
    return kInvalid;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
