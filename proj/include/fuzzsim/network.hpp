#pragma once

// Single-node road network: approach and exit links, lanes, turning
// movements with their paths through the box, and conflict points.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fuzzsim/geometry.hpp"

namespace fuzzsim::net {

enum class Turn : std::uint8_t { left, through, right };
enum class StreamClass : std::uint8_t { motor, non_motor, pedestrian };
/// Compass side of a leg. An approach from `south` carries northbound traffic.
enum class Side : std::uint8_t { north, east, south, west };
enum class LinkRole : std::uint8_t { approach, exit };

const char* to_string(Turn t) noexcept;
const char* to_string(StreamClass c) noexcept;
const char* to_string(Side s) noexcept;
Turn parse_turn(const std::string& s);
StreamClass parse_stream_class(const std::string& s);

using TurnSet = std::uint8_t;
constexpr TurnSet turn_bit(Turn t) noexcept { return TurnSet(1u << unsigned(t)); }
constexpr TurnSet kAllTurns = turn_bit(Turn::left) | turn_bit(Turn::through) | turn_bit(Turn::right);

/// Unit heading of traffic approaching from `s`.
geom::Vec2 inbound_heading(Side s) noexcept;
/// Unit heading of traffic leaving towards `s`.
geom::Vec2 outbound_heading(Side s) noexcept;
/// Exit side reached from approach side `from` by turn `t`.
Side exit_side(Side from, Turn t) noexcept;
/// Travel direction label ("NB", "EB", ...) of traffic approaching from `s`.
const char* bound_label(Side from) noexcept;

struct Lane {
  int index = 0;
  double width = 3.5;  // m
  bool motor = true;
  bool non_motor = false;
  TurnSet turns = kAllTurns;

  bool admits(StreamClass c) const noexcept {
    return c == StreamClass::motor ? motor : c == StreamClass::non_motor ? non_motor : false;
  }
  bool allows(Turn t) const noexcept { return (turns & turn_bit(t)) != 0; }
};

struct Link {
  std::string id;
  double length = 0.0;      // m
  std::vector<Lane> lanes;  // nearside first
  double speed_limit = 16.7;
  std::string direction;  // e.g. "NB approach"
  LinkRole role = LinkRole::approach;
  Side side = Side::south;
  std::string node;  // approach links end here, exit links start here
};

/// Path through the box for one entry lane of a movement.
struct LanePath {
  int from_lane = -1;  // -1 for pedestrian streams
  int to_lane = -1;
  geom::Path path;
};

struct Movement {
  std::string id;
  int from_link = -1;
  std::vector<int> from_lanes;
  int to_link = -1;
  Turn turn = Turn::through;
  StreamClass cls = StreamClass::motor;
  std::vector<LanePath> paths;

  /// Longest lane path through the box (m).
  double path_length() const noexcept;
  /// Index into `paths` for an entry lane, or -1.
  int path_for_lane(int lane) const noexcept;
};

struct ConflictPoint {
  int movement_a = -1;
  int movement_b = -1;
  int path_a = 0;  // index into movement_a's paths
  int path_b = 0;
  double dist_a = 0.0;  // m from stop line along path_a
  double dist_b = 0.0;
  int yielding = -1;  // movement that yields when both are permitted
  geom::Vec2 at;
};

struct Network {
  std::string node = "node";
  std::vector<Link> links;
  std::vector<Movement> movements;
  std::vector<ConflictPoint> conflicts;  // each pair registered once

  /// Throw InputError for unknown ids.
  int link_index(const std::string& id) const;
  int movement_index(const std::string& id) const;
  int find_movement(const std::string& id) const noexcept;  // -1 when absent
};

/// Empty when the network is consistent.
std::vector<std::string> validate_network(const Network& net);

/// Conflict point seen from one movement: `self_*` fields refer to it.
struct OrientedConflict {
  int other = -1;
  int self_path = 0;
  int other_path = 0;
  double self_dist = 0.0;
  double other_dist = 0.0;
  bool self_yields = false;
  int index = -1;  // position in Network::conflicts
};

/// All registered conflicts involving movement `m`, oriented to `m`.
std::vector<OrientedConflict> conflicting_movements(const Network& net, int m);
std::vector<OrientedConflict> conflicting_movements(const Network& net, const std::string& id);

/// Recompute every conflict point from the movement paths.
std::vector<ConflictPoint> compute_conflicts(const std::vector<Movement>& movements);

struct CrossParams {
  std::array<int, 4> motor_lanes{2, 2, 2, 2};  // indexed by Side
  /// Per side, nearside first; empty means the default channelisation.
  std::array<std::vector<TurnSet>, 4> lane_turns;
  bool non_motor_lane = true;  // dedicated nearside lane, else shared
  double lane_width = 3.5;
  double non_motor_lane_width = 2.5;
  double approach_length = 300.0;
  double exit_length = 150.0;
  double speed_limit = 16.7;
  double motor_turn_radius = 1.0;  // fraction of the largest fillet
  double non_motor_turn_radius = 0.4;
  double box_margin = 2.0;
  double crosswalk_inset = 1.5;  // crosswalk distance inside the box edge

  void validate() const;  // throws InputError
};

/// Default channelisation for `n` motor lanes: nearside T+R, offside L+T
/// (one lane: L+T+R; three or more: T+R, T..., L).
std::vector<TurnSet> default_lane_turns(int n);

/// Four-leg cross: per approach 3 motor and 3 non-motor movements, plus one
/// pedestrian stream across each leg.
Network standard_cross_intersection(const CrossParams& params = {});

/// Movement id helper: "<bound>_<L|T|R>" with "_nm" for non-motor;
/// pedestrian streams are "ped_<N|E|S|W>" for the leg crossed.
std::string movement_id(Side from, Turn t, StreamClass c);
std::string pedestrian_id(Side leg);

}  // namespace fuzzsim::net
