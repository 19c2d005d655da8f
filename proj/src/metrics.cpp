#include "fuzzsim/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "fuzzsim/errors.hpp"

namespace fuzzsim::metrics {

namespace {

constexpr double kTimeTol = 1e-6;

std::string num(double x, int prec = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, x == 0.0 ? 0.0 : x);  // no "-0"
  return buf;
}

struct Acc {
  long n = 0;
  double delay = 0.0;
  double travel = 0.0;
  double distance = 0.0;
  double q_sum = 0.0;
  long q_n = 0;
  int q_max = 0;

  void add(const sim::VehicleRecord& r) {
    ++n;
    delay += control_delay(r);
    travel += r.exit - r.entry;
    distance += r.distance;
  }
  void add_queue(int q) {
    q_sum += q;
    ++q_n;
    q_max = std::max(q_max, q);
  }
  GroupMOE moe() const {
    GroupMOE g;
    g.throughput = n;
    g.total_distance = distance;
    g.total_time = travel;
    if (n > 0) {
      g.avg_delay = delay / double(n);
      g.avg_travel_time = travel / double(n);
    }
    if (travel > 0.0) g.avg_speed = distance / travel;
    if (q_n > 0) g.avg_queue = q_sum / double(q_n);
    g.max_queue = q_max;
    return g;
  }
};

const std::string& link_id(const net::Network& net, int link) {
  if (link < 0 || std::size_t(link) >= net.links.size())
    throw InputError("record refers to unknown link " + std::to_string(link));
  return net.links[std::size_t(link)].id;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s, const std::string& field, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size() || !std::isfinite(v))
    throw InputError("detector csv line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  return v;
}

double rel_dev(double obs, double sim, double eps) { return std::abs(obs - sim) / std::max(obs, eps); }

}  // namespace

double control_delay(const sim::VehicleRecord& rec, double free_flow_time) {
  if (!(free_flow_time > 0.0) || !std::isfinite(free_flow_time))
    throw InputError("free_flow_time must be positive");
  return std::max(0.0, (rec.exit - rec.entry) - free_flow_time);
}

double control_delay(const sim::VehicleRecord& rec) { return control_delay(rec, rec.free_flow_time); }

int queue_length(const sim::World& world, int approach_link) { return world.queue_length(approach_link); }

IntervalMOE aggregate_interval(const sim::RunResult& run, const net::Network& net, double t0, double t1) {
  if (!(t1 > t0)) throw InputError("interval end must follow its start");
  IntervalMOE out;
  out.t0 = t0;
  out.t1 = t1;
  const bool closes_run = t1 >= run.end - kTimeTol;
  Acc all;
  std::map<std::string, Acc> by_approach;
  std::map<std::string, Acc> by_movement;
  for (int l : run.approach_links) by_approach[link_id(net, l)];
  for (const auto& r : run.records) {
    const bool in = r.exit >= t0 - kTimeTol && (r.exit < t1 - kTimeTol || (closes_run && r.exit <= t1 + kTimeTol));
    if (!in) continue;
    all.add(r);
    by_approach[link_id(net, r.approach)].add(r);
    by_movement[r.movement].add(r);
  }
  for (const auto& s : run.queues) {
    if (s.t <= t0 + kTimeTol || s.t > t1 + kTimeTol) continue;
    int total = 0;
    for (std::size_t i = 0; i < s.queue.size() && i < run.approach_links.size(); ++i) {
      by_approach[link_id(net, run.approach_links[i])].add_queue(s.queue[i]);
      total += s.queue[i];
    }
    all.add_queue(total);
  }
  out.empty = all.n == 0;
  out.network = all.moe();
  for (const auto& [k, a] : by_approach) out.approaches[k] = a.moe();
  for (const auto& [k, a] : by_movement) out.movements[k] = a.moe();
  return out;
}

std::vector<IntervalMOE> aggregate_run(const sim::RunResult& run, const net::Network& net, double interval,
                                       double warmup) {
  if (!(interval > 0.0)) throw InputError("interval must be positive");
  if (warmup < 0.0) throw InputError("warm-up must be non-negative");
  std::vector<IntervalMOE> out;
  for (double t0 = run.start + warmup; t0 < run.end - kTimeTol; t0 += interval)
    out.push_back(aggregate_interval(run, net, t0, std::min(t0 + interval, run.end)));
  return out;
}

RunSummary summarize(const sim::RunResult& run, const net::Network& net, std::uint64_t seed, double warmup) {
  RunSummary s;
  s.seed = seed;
  if (run.end - run.start - warmup <= kTimeTol) return s;
  const auto m = aggregate_interval(run, net, run.start + warmup, run.end);
  s.throughput = m.network.throughput;
  s.avg_delay = m.network.avg_delay;
  s.avg_speed = m.network.avg_speed;
  s.avg_travel_time = m.network.avg_travel_time;
  s.avg_queue = m.network.avg_queue;
  s.max_queue = m.network.max_queue;
  return s;
}

std::map<std::string, double> road_capacity(const sim::RunResult& run, const sim::Model& model) {
  const auto& net = model.network();
  const auto& cp = model.plan();
  const double dt = model.setup().params.dt;
  std::map<std::string, double> out;
  for (std::size_t ai = 0; ai < run.approach_links.size(); ++ai) {
    const int link = run.approach_links[ai];
    std::vector<int> controlled;
    for (std::size_t m = 0; m < net.movements.size(); ++m) {
      const auto& mv = net.movements[m];
      if (mv.from_link == link && mv.cls == net::StreamClass::motor && !cp.uncontrolled(int(m)) &&
          !cp.twice_crossing(int(m)))
        controlled.push_back(int(m));
    }
    auto green_at = [&](double t) {
      for (int m : controlled)
        if (cp.is_green(m, t)) return true;
      return false;
    };
    auto queue_at = [&](double t) {
      int q = 0;
      for (const auto& s : run.queues) {
        if (s.t > t + kTimeTol) break;
        q = ai < s.queue.size() ? s.queue[ai] : 0;
      }
      return q;
    };
    // Saturated green intervals: green spells that begin with a standing queue.
    std::vector<std::pair<double, double>> spells;
    double start = 0.0;
    bool open = false;
    for (double t = run.start; t < run.end + 0.5 * dt; t += dt) {
      const bool g = t < run.end && green_at(t + 0.5 * dt);
      if (g && !open) {
        start = t;
        open = true;
      }
      if (!g && open) {
        if (queue_at(start) > 0) spells.push_back({start, t});
        open = false;
      }
    }
    double green = 0.0;
    long crossings = 0;
    for (const auto& [a, b] : spells) {
      green += b - a;
      for (const auto& r : run.records) {
        if (r.approach != link || r.cls != sim::VehicleClass::motor || r.stop_line < a || r.stop_line >= b) continue;
        const int m = net.movement_index(r.movement);
        if (std::find(controlled.begin(), controlled.end(), m) != controlled.end()) ++crossings;
      }
    }
    out[net.links[std::size_t(link)].id] = green > 0.0 ? double(crossings) * 3600.0 / green : 0.0;
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InputError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<PlanRanking> compare_plans(const std::vector<PlanRuns>& plans) {
  if (plans.size() < 2) throw InputError("comparison needs at least two plans");
  std::set<std::string> names;
  for (const auto& p : plans) {
    if (!names.insert(p.plan).second) throw InputError("plan '" + p.plan + "' listed twice");
    if (p.runs.empty()) throw InputError("plan '" + p.plan + "' has no runs");
    if (p.scenario != plans.front().scenario)
      throw InputError("plan '" + p.plan + "' was run on a different scenario");
    if (p.runs.size() != plans.front().runs.size()) throw InputError("plan '" + p.plan + "' has a different seed set");
    for (std::size_t i = 0; i < p.runs.size(); ++i)
      if (p.runs[i].seed != plans.front().runs[i].seed)
        throw InputError("plan '" + p.plan + "' has a different seed set");
  }
  std::vector<PlanRanking> out;
  for (const auto& p : plans) {
    PlanRanking r;
    r.plan = p.plan;
    for (const auto& s : p.runs) {
      r.delays.push_back(s.avg_delay);
      r.speeds.push_back(s.avg_speed);
    }
    r.median_delay = median(r.delays);
    r.median_speed = median(r.speeds);
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const PlanRanking& a, const PlanRanking& b) {
    if (a.median_delay != b.median_delay) return a.median_delay < b.median_delay;
    return a.plan < b.plan;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = int(i) + 1;
  return out;
}

void write_moe_csv(std::ostream& os, const std::vector<IntervalMOE>& intervals) {
  os << "t0,t1,scope,id,empty,throughput,avg_delay,avg_speed,avg_travel_time,avg_queue,max_queue\n";
  auto row = [&](const IntervalMOE& m, const char* scope, const std::string& id, const GroupMOE& g) {
    os << num(m.t0, 1) << ',' << num(m.t1, 1) << ',' << scope << ',' << id << ',' << (g.throughput == 0 ? 1 : 0)
       << ',' << g.throughput << ',' << num(g.avg_delay) << ',' << num(g.avg_speed) << ','
       << num(g.avg_travel_time) << ',' << num(g.avg_queue) << ',' << g.max_queue << '\n';
  };
  for (const auto& m : intervals) {
    row(m, "network", "all", m.network);
    for (const auto& [k, g] : m.approaches) row(m, "approach", k, g);
    for (const auto& [k, g] : m.movements) row(m, "movement", k, g);
  }
}

void write_records_csv(std::ostream& os, const std::vector<sim::VehicleRecord>& recs) {
  os << "id,class,movement,arrival,entry,stop_line,exit,distance,stops,slow_time,free_flow_time,delay\n";
  for (const auto& r : recs)
    os << r.id << ',' << driver::to_string(r.cls) << ',' << r.movement << ',' << num(r.arrival, 3) << ','
       << num(r.entry, 3) << ',' << num(r.stop_line, 3) << ',' << num(r.exit, 3) << ',' << num(r.distance, 3) << ','
       << r.stops << ',' << num(r.slow_time, 3) << ',' << num(r.free_flow_time, 3) << ','
       << num(control_delay(r), 3) << '\n';
}

void write_ranking_csv(std::ostream& os, const std::vector<PlanRanking>& ranking) {
  os << "rank,plan,median_delay,median_speed,seeds\n";
  for (const auto& r : ranking)
    os << r.rank << ',' << r.plan << ',' << num(r.median_delay) << ',' << num(r.median_speed) << ',' << r.delays.size()
       << '\n';
}

void write_plot_csv(std::ostream& os, const std::vector<PlanRanking>& ranking) {
  os << "plan,avg_speed,avg_delay\n";
  for (const auto& r : ranking) os << r.plan << ',' << num(r.median_speed) << ',' << num(r.median_delay) << '\n';
}

// --- detector assessment ---------------------------------------------------

std::vector<DetectorRecord> read_detector_csv(std::istream& in) {
  std::string line;
  int n = 0;
  std::vector<DetectorRecord> out;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (line.empty()) continue;
    if (!header) {
      if (line != kDetectorHeader)
        throw InputError("detector csv line " + std::to_string(n) + ": expected header '" + kDetectorHeader + "'");
      header = true;
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 6)
      throw InputError("detector csv line " + std::to_string(n) + ": expected 6 fields, got " +
                       std::to_string(f.size()));
    DetectorRecord r;
    r.t0 = parse_number(f[0], "interval_start", n);
    r.t1 = parse_number(f[1], "interval_end", n);
    r.approach = f[2];
    r.volume = parse_number(f[3], "volume", n);
    r.avg_speed = parse_number(f[4], "avg_speed_mps", n);
    r.occupancy = parse_number(f[5], "occupancy", n);
    const std::string at = "detector csv line " + std::to_string(n) + ": ";
    if (!(r.t1 > r.t0)) throw InputError(at + "interval_end must follow interval_start");
    if (r.approach.empty()) throw InputError(at + "empty approach");
    if (r.volume < 0.0) throw InputError(at + "negative volume");
    if (r.avg_speed < 0.0) throw InputError(at + "negative speed");
    if (r.occupancy < 0.0 || r.occupancy > 1.0) throw InputError(at + "occupancy outside [0, 1]");
    out.push_back(std::move(r));
  }
  if (!header) throw InputError("detector csv: missing header");
  return out;
}

void write_detector_csv(std::ostream& os, const std::vector<DetectorRecord>& recs) {
  os << kDetectorHeader << '\n';
  for (const auto& r : recs)
    os << num(r.t0, 1) << ',' << num(r.t1, 1) << ',' << r.approach << ',' << num(r.volume, 3) << ','
       << num(r.avg_speed, 3) << ',' << num(r.occupancy, 4) << '\n';
}

const char* to_string(Verdict v) noexcept { return v == Verdict::normal ? "normal" : "divergent"; }

std::vector<DetectorRecord> detector_view(const IntervalMOE& moe) {
  std::vector<DetectorRecord> out;
  for (const auto& [k, g] : moe.approaches) out.push_back({moe.t0, moe.t1, k, double(g.throughput), g.avg_speed, 0.0});
  return out;
}

AssessmentResult assess_window(const std::vector<DetectorRecord>& observed, const IntervalMOE& simulated,
                               const AssessConfig& cfg) {
  AssessmentResult res;
  res.t0 = simulated.t0;
  res.t1 = simulated.t1;
  std::set<std::string> seen;
  for (const auto& o : observed) {
    if (std::abs(o.t0 - simulated.t0) > kTimeTol || std::abs(o.t1 - simulated.t1) > kTimeTol)
      throw InputError("observed interval [" + num(o.t0, 1) + ", " + num(o.t1, 1) + ") does not match simulated [" +
                       num(simulated.t0, 1) + ", " + num(simulated.t1, 1) + ")");
    if (!seen.insert(o.approach).second) throw InputError("approach '" + o.approach + "' observed twice");
    const auto it = simulated.approaches.find(o.approach);
    if (it == simulated.approaches.end()) throw InputError("no simulated measures for approach '" + o.approach + "'");
    ApproachDeviation d;
    d.approach = o.approach;
    d.observed_volume = o.volume;
    d.simulated_volume = double(it->second.throughput);
    d.volume = rel_dev(d.observed_volume, d.simulated_volume, cfg.volume_eps);
    d.observed_speed = o.avg_speed;
    d.simulated_speed = it->second.avg_speed;
    // Speeds are only comparable when both sides saw traffic.
    if (o.volume > 0.0 && it->second.throughput > 0) d.speed = rel_dev(d.observed_speed, d.simulated_speed, cfg.speed_eps);
    res.volume_deviation = std::max(res.volume_deviation, d.volume);
    res.speed_deviation = std::max(res.speed_deviation, d.speed);
    res.approaches.push_back(std::move(d));
  }
  if (res.volume_deviation > cfg.volume_threshold) res.offending.push_back("volume");
  if (res.speed_deviation > cfg.speed_threshold) res.offending.push_back("speed");
  res.verdict = res.offending.empty() ? Verdict::normal : Verdict::divergent;
  return res;
}

sim::DemandProfile demand_from_detectors(const std::vector<DetectorRecord>& window, const sim::DemandProfile& tmpl,
                                         const net::Network& net, double t0, double t1, double warmup) {
  if (!(t1 > t0)) throw InputError("window end must follow its start");
  sim::DemandProfile d;
  d.start = t0 - warmup;
  d.end = t1;
  d.interval = d.end - d.start;
  auto mean_rate = [](const sim::DemandStream& s) {
    double sum = 0.0;
    for (double r : s.rates) sum += r;
    return s.rates.empty() ? 0.0 : sum / double(s.rates.size());
  };
  for (const auto& s : tmpl.streams)
    if (s.cls == net::StreamClass::pedestrian) d.streams.push_back({s.movement, s.cls, {mean_rate(s)}});
  for (const auto& o : window) {
    const int link = net.link_index(o.approach);
    if (link < 0 || net.links[std::size_t(link)].role != net::LinkRole::approach)
      throw InputError("detector approach '" + o.approach + "' is not an approach link");
    const double hourly = o.volume * 3600.0 / (t1 - t0);
    std::vector<std::pair<const sim::DemandStream*, double>> shares;
    double total = 0.0;
    for (const auto& s : tmpl.streams) {
      if (s.cls == net::StreamClass::pedestrian) continue;
      const int m = net.find_movement(s.movement);
      if (m < 0 || net.movements[std::size_t(m)].from_link != link) continue;
      shares.push_back({&s, mean_rate(s)});
      total += mean_rate(s);
    }
    if (total > 0.0) {
      for (const auto& [s, r] : shares) d.streams.push_back({s->movement, s->cls, {hourly * r / total}});
      continue;
    }
    // No template share for this approach: spread over its motor movements.
    std::vector<std::string> ids;
    for (const auto& m : net.movements)
      if (m.from_link == link && m.cls == net::StreamClass::motor) ids.push_back(m.id);
    for (const auto& id : ids) d.streams.push_back({id, net::StreamClass::motor, {hourly / double(ids.size())}});
  }
  return d;
}

std::vector<WindowResult> rolling_assess(const std::vector<DetectorRecord>& feed, const sim::Setup& tmpl,
                                         const RollingOptions& opt) {
  if (!(opt.window > 0.0)) throw InputError("window must be positive");
  if (opt.warmup < 0.0) throw InputError("warm-up must be non-negative");
  std::vector<WindowResult> out;
  if (feed.empty()) return out;
  std::set<std::string> approaches;
  double first = feed.front().t0, last = feed.front().t1;
  for (const auto& r : feed) {
    approaches.insert(r.approach);
    first = std::min(first, r.t0);
    last = std::max(last, r.t1);
  }
  for (double t0 = first; t0 < last - kTimeTol; t0 += opt.window) {
    const double t1 = t0 + opt.window;
    WindowResult w;
    w.t0 = t0;
    w.t1 = t1;
    // Records may be finer than the window; they must tile it per approach.
    std::map<std::string, std::vector<const DetectorRecord*>> parts;
    for (const auto& r : feed)
      if (r.t0 >= t0 - kTimeTol && r.t1 <= t1 + kTimeTol) parts[r.approach].push_back(&r);
    std::vector<DetectorRecord> obs;
    for (const auto& a : approaches) {
      auto& v = parts[a];
      std::sort(v.begin(), v.end(), [](auto* x, auto* y) { return x->t0 < y->t0; });
      double at = t0, vol = 0.0, dist_time = 0.0, occ = 0.0;
      bool ok = !v.empty();
      for (auto* r : v) {
        if (std::abs(r->t0 - at) > kTimeTol) ok = false;
        at = r->t1;
        vol += r->volume;
        dist_time += r->volume * r->avg_speed;
        occ += r->occupancy * (r->t1 - r->t0);
      }
      if (std::abs(at - t1) > kTimeTol) ok = false;
      if (!ok) {
        w.gap = true;
        break;
      }
      obs.push_back({t0, t1, a, vol, vol > 0.0 ? dist_time / vol : 0.0, occ / (t1 - t0)});
    }
    if (!w.gap) {
      sim::Setup s = tmpl;
      s.demand = demand_from_detectors(obs, tmpl.demand, tmpl.network, t0, t1, opt.warmup);
      s.params.warmup = opt.warmup;
      const auto model = std::make_shared<const sim::Model>(std::move(s));
      const auto clock0 = std::chrono::steady_clock::now();
      const auto run = sim::run(model, opt.seed);
      const auto moe = aggregate_interval(run, model->network(), t0, t1);
      w.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
      w.simulated_seconds = t1 - (t0 - opt.warmup);
      w.speed_ratio = w.wall_seconds > 0.0 ? w.simulated_seconds / w.wall_seconds : 0.0;
      w.assessment = assess_window(obs, moe, opt.thresholds);
    }
    out.push_back(std::move(w));
  }
  return out;
}

void write_assessment_csv(std::ostream& os, const std::vector<WindowResult>& results) {
  os << "t0,t1,gap,verdict,volume_deviation,speed_deviation,offending,simulated_seconds,wall_seconds,speed_ratio\n";
  for (const auto& w : results) {
    std::string off;
    for (const auto& m : w.assessment.offending) off += (off.empty() ? "" : ";") + m;
    os << num(w.t0, 1) << ',' << num(w.t1, 1) << ',' << (w.gap ? 1 : 0) << ','
       << (w.gap ? "gap" : to_string(w.assessment.verdict)) << ',' << num(w.assessment.volume_deviation) << ','
       << num(w.assessment.speed_deviation) << ',' << off << ',' << num(w.simulated_seconds, 1) << ','
       << num(w.wall_seconds, 3) << ',' << num(w.speed_ratio, 2) << '\n';
  }
}

}  // namespace fuzzsim::metrics
