#pragma once

// Measures of effectiveness, plan comparison and detector-based assessment.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fuzzsim/sim.hpp"

namespace fuzzsim::metrics {

/// max(0, (exit - entry) - free_flow_time). Throws InputError when
/// free_flow_time <= 0.
double control_delay(const sim::VehicleRecord& rec, double free_flow_time);
double control_delay(const sim::VehicleRecord& rec);  // uses rec.free_flow_time

/// Contiguous slow run upstream of the stop line, summed over lanes.
int queue_length(const sim::World& world, int approach_link);

struct GroupMOE {
  long throughput = 0;          // exits in the interval
  double avg_delay = 0.0;       // s/veh
  double avg_speed = 0.0;       // m/s, total distance / total travel time
  double avg_travel_time = 0.0; // s
  double avg_queue = 0.0;       // vehicles
  int max_queue = 0;
  double total_distance = 0.0;  // m
  double total_time = 0.0;      // s
};

struct IntervalMOE {
  double t0 = 0.0;
  double t1 = 0.0;
  bool empty = true;  // no exits
  GroupMOE network;
  std::map<std::string, GroupMOE> approaches;  // approach link id
  std::map<std::string, GroupMOE> movements;   // movement id
};

/// Vehicles exiting in [t0, t1) and queue samples taken in (t0, t1].
IntervalMOE aggregate_interval(const sim::RunResult& run, const net::Network& net, double t0, double t1);

/// Consecutive intervals of the given length from start + warmup to end.
std::vector<IntervalMOE> aggregate_run(const sim::RunResult& run, const net::Network& net, double interval,
                                       double warmup = 0.0);

/// Network averages of one run over vehicles exiting after the warm-up.
struct RunSummary {
  std::uint64_t seed = 0;
  long throughput = 0;
  double avg_delay = 0.0;
  double avg_speed = 0.0;
  double avg_travel_time = 0.0;
  double avg_queue = 0.0;  // network total, mean over samples
  int max_queue = 0;
};

RunSummary summarize(const sim::RunResult& run, const net::Network& net, std::uint64_t seed, double warmup = 0.0);

/// Saturation throughput per green hour and approach: stop-line crossings
/// in green seconds that began with a standing queue, scaled to an hour.
std::map<std::string, double> road_capacity(const sim::RunResult& run, const sim::Model& model);

struct PlanRuns {
  std::string plan;
  std::string scenario;  // identity of the shared scenario (network, demand)
  std::vector<RunSummary> runs;
};

struct PlanRanking {
  std::string plan;
  int rank = 0;  // 1 = best
  double median_delay = 0.0;
  double median_speed = 0.0;
  std::vector<double> delays;  // per seed
  std::vector<double> speeds;
};

/// Median over seeds, ranked by delay ascending with ties broken by name.
/// Throws InputError for fewer than two plans or mismatched scenarios/seeds.
std::vector<PlanRanking> compare_plans(const std::vector<PlanRuns>& plans);

double median(std::vector<double> v);

/// Stable CSV schemas; numbers printed with fixed precision.
void write_moe_csv(std::ostream& os, const std::vector<IntervalMOE>& intervals);
void write_records_csv(std::ostream& os, const std::vector<sim::VehicleRecord>& recs);
void write_ranking_csv(std::ostream& os, const std::vector<PlanRanking>& ranking);
void write_plot_csv(std::ostream& os, const std::vector<PlanRanking>& ranking);  // plan,avg_speed,avg_delay

// --- detector assessment ---------------------------------------------------

struct DetectorRecord {
  double t0 = 0.0;
  double t1 = 0.0;
  std::string approach;  // approach link id
  double volume = 0.0;   // veh in the interval
  double avg_speed = 0.0;
  double occupancy = 0.0;  // [0, 1]
};

inline constexpr const char* kDetectorHeader = "interval_start,interval_end,approach,volume,avg_speed_mps,occupancy";

/// Throws InputError naming the line on malformed input.
std::vector<DetectorRecord> read_detector_csv(std::istream& in);
void write_detector_csv(std::ostream& os, const std::vector<DetectorRecord>& recs);

struct AssessConfig {
  double volume_threshold = 0.25;
  double speed_threshold = 0.25;
  double volume_eps = 1.0;  // veh
  double speed_eps = 1.0;   // m/s
};

enum class Verdict { normal, divergent };
const char* to_string(Verdict v) noexcept;

struct ApproachDeviation {
  std::string approach;
  double observed_volume = 0.0;
  double simulated_volume = 0.0;
  double volume = 0.0;  // relative deviation
  double observed_speed = 0.0;
  double simulated_speed = 0.0;
  double speed = 0.0;
};

struct AssessmentResult {
  double t0 = 0.0;
  double t1 = 0.0;
  double volume_deviation = 0.0;  // worst approach
  double speed_deviation = 0.0;
  Verdict verdict = Verdict::normal;
  std::vector<std::string> offending;  // "volume", "speed"
  std::vector<ApproachDeviation> approaches;
};

/// Detector-style view of simulated measures: one record per approach.
std::vector<DetectorRecord> detector_view(const IntervalMOE& moe);

/// |obs - sim| / max(obs, eps) per metric; divergent iff any deviation
/// strictly exceeds its threshold. Throws InputError when the observed
/// interval differs from the simulated one or an approach is missing.
AssessmentResult assess_window(const std::vector<DetectorRecord>& observed, const IntervalMOE& simulated,
                               const AssessConfig& cfg = {});

struct WindowResult {
  double t0 = 0.0;
  double t1 = 0.0;
  bool gap = false;  // feed incomplete; no run made
  AssessmentResult assessment;
  double simulated_seconds = 0.0;  // including warm-up
  double wall_seconds = 0.0;
  double speed_ratio = 0.0;  // simulated seconds per wall second
};

struct RollingOptions {
  double window = 900.0;
  double warmup = 300.0;  // simulated before each window, not assessed
  std::uint64_t seed = 42;
  AssessConfig thresholds;
};

/// Demand for one window: observed approach volumes split over the
/// template's movements and classes in the template's proportions.
sim::DemandProfile demand_from_detectors(const std::vector<DetectorRecord>& window, const sim::DemandProfile& tmpl,
                                         const net::Network& net, double t0, double t1, double warmup);

/// One result per window covering the feed; windows without a record for
/// every approach are gap markers.
std::vector<WindowResult> rolling_assess(const std::vector<DetectorRecord>& feed, const sim::Setup& tmpl,
                                         const RollingOptions& opt = {});

void write_assessment_csv(std::ostream& os, const std::vector<WindowResult>& results);

}  // namespace fuzzsim::metrics
