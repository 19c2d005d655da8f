#include "fuzzsim/network.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "fuzzsim/errors.hpp"

namespace fuzzsim::net {

using geom::Vec2;

const char* to_string(Turn t) noexcept {
  switch (t) {
    case Turn::left: return "left";
    case Turn::through: return "through";
    case Turn::right: return "right";
  }
  return "?";
}

const char* to_string(StreamClass c) noexcept {
  switch (c) {
    case StreamClass::motor: return "motor";
    case StreamClass::non_motor: return "non_motor";
    case StreamClass::pedestrian: return "pedestrian";
  }
  return "?";
}

const char* to_string(Side s) noexcept {
  switch (s) {
    case Side::north: return "north";
    case Side::east: return "east";
    case Side::south: return "south";
    case Side::west: return "west";
  }
  return "?";
}

Turn parse_turn(const std::string& s) {
  if (s == "left") return Turn::left;
  if (s == "through") return Turn::through;
  if (s == "right") return Turn::right;
  throw InputError("unknown turn '" + s + "'");
}

StreamClass parse_stream_class(const std::string& s) {
  if (s == "motor") return StreamClass::motor;
  if (s == "non_motor") return StreamClass::non_motor;
  if (s == "pedestrian") return StreamClass::pedestrian;
  throw InputError("unknown stream class '" + s + "'");
}

Vec2 outbound_heading(Side s) noexcept {
  switch (s) {
    case Side::north: return {0, 1};
    case Side::east: return {1, 0};
    case Side::south: return {0, -1};
    case Side::west: return {-1, 0};
  }
  return {};
}

Vec2 inbound_heading(Side s) noexcept { return -1.0 * outbound_heading(s); }

Side exit_side(Side from, Turn t) noexcept {
  // Sides in clockwise order N, E, S, W. Heading away from `from` means the
  // opposite side; a right turn rotates the heading clockwise.
  const int opposite = (int(from) + 2) % 4;
  switch (t) {
    case Turn::through: return Side(opposite);
    case Turn::right: return Side((opposite + 1) % 4);
    case Turn::left: return Side((opposite + 3) % 4);
  }
  return Side(opposite);
}

const char* bound_label(Side from) noexcept {
  switch (from) {
    case Side::north: return "SB";
    case Side::east: return "WB";
    case Side::south: return "NB";
    case Side::west: return "EB";
  }
  return "?";
}

double Movement::path_length() const noexcept {
  double len = 0.0;
  for (const auto& p : paths) len = std::max(len, p.path.length());
  return len;
}

int Movement::path_for_lane(int lane) const noexcept {
  for (std::size_t i = 0; i < paths.size(); ++i)
    if (paths[i].from_lane == lane) return int(i);
  return -1;
}

int Network::link_index(const std::string& id) const {
  for (std::size_t i = 0; i < links.size(); ++i)
    if (links[i].id == id) return int(i);
  throw InputError("unknown link '" + id + "'");
}

int Network::find_movement(const std::string& id) const noexcept {
  for (std::size_t i = 0; i < movements.size(); ++i)
    if (movements[i].id == id) return int(i);
  return -1;
}

int Network::movement_index(const std::string& id) const {
  const int i = find_movement(id);
  if (i < 0) throw InputError("unknown movement '" + id + "'");
  return i;
}

std::vector<std::string> validate_network(const Network& net) {
  std::vector<std::string> bad;
  auto fail = [&](const std::string& what) { bad.push_back(what); };
  const int n_links = int(net.links.size());
  const int n_moves = int(net.movements.size());

  std::set<std::string> ids;
  for (const auto& l : net.links) {
    if (!ids.insert(l.id).second) fail("duplicate link id '" + l.id + "'");
    if (!(l.length > 0)) fail("link '" + l.id + "' length must be > 0");
    if (l.lanes.empty()) fail("link '" + l.id + "' has no lanes");
    if (!(l.speed_limit > 0)) fail("link '" + l.id + "' speed limit must be > 0");
    if (l.node != net.node) fail("link '" + l.id + "' does not attach to node '" + net.node + "'");
    for (std::size_t i = 0; i < l.lanes.size(); ++i) {
      const auto& ln = l.lanes[i];
      if (ln.index != int(i)) fail("link '" + l.id + "' lane indices out of order");
      if (!(ln.width > 0)) fail("link '" + l.id + "' lane width must be > 0");
      if (!ln.motor && !ln.non_motor) fail("link '" + l.id + "' lane admits no class");
      if ((ln.turns & kAllTurns) == 0) fail("link '" + l.id + "' lane allows no turn");
    }
  }

  std::set<std::string> mids;
  std::vector<int> served(net.links.size(), 0);
  for (const auto& m : net.movements) {
    if (!mids.insert(m.id).second) fail("duplicate movement id '" + m.id + "'");
    const bool from_ok = m.from_link >= 0 && m.from_link < n_links;
    const bool to_ok = m.to_link >= 0 && m.to_link < n_links;
    if (!from_ok) fail("movement '" + m.id + "' references a missing from link");
    if (!to_ok) fail("movement '" + m.id + "' references a missing to link");
    if (m.paths.empty()) fail("movement '" + m.id + "' has no path");
    for (const auto& p : m.paths)
      if (!(p.path.length() > 0)) fail("movement '" + m.id + "' path length must be > 0");
    if (!from_ok || !to_ok) continue;
    const auto& from = net.links[std::size_t(m.from_link)];
    const auto& to = net.links[std::size_t(m.to_link)];
    if (from.role != LinkRole::approach) fail("movement '" + m.id + "' must start on an approach link");
    if (to.role != LinkRole::exit) fail("movement '" + m.id + "' must end on an exit link");
    if (m.cls == StreamClass::pedestrian) continue;
    ++served[std::size_t(m.from_link)];
    if (m.from_lanes.empty()) fail("movement '" + m.id + "' has no entry lane");
    for (int lane : m.from_lanes) {
      if (lane < 0 || lane >= int(from.lanes.size())) {
        fail("movement '" + m.id + "' references a missing lane");
        continue;
      }
      const auto& ln = from.lanes[std::size_t(lane)];
      if (!ln.allows(m.turn)) fail("movement '" + m.id + "' lane " + std::to_string(lane) + " does not allow its turn");
      if (!ln.admits(m.cls)) fail("movement '" + m.id + "' lane " + std::to_string(lane) + " does not admit its class");
      if (m.path_for_lane(lane) < 0) fail("movement '" + m.id + "' lane " + std::to_string(lane) + " has no path");
    }
    for (const auto& p : m.paths)
      if (p.to_lane < 0 || p.to_lane >= int(to.lanes.size()))
        fail("movement '" + m.id + "' path ends on a missing lane");
  }
  for (std::size_t i = 0; i < net.links.size(); ++i)
    if (net.links[i].role == LinkRole::approach && served[i] == 0)
      fail("entry link '" + net.links[i].id + "' has no movement");

  std::set<std::tuple<int, int, int, int, long long, long long>> seen;
  for (const auto& c : net.conflicts) {
    if (c.movement_a < 0 || c.movement_a >= n_moves || c.movement_b < 0 || c.movement_b >= n_moves) {
      fail("conflict point references a missing movement");
      continue;
    }
    const auto& a = net.movements[std::size_t(c.movement_a)];
    const auto& b = net.movements[std::size_t(c.movement_b)];
    if (c.movement_a == c.movement_b) {
      fail("conflict point of '" + a.id + "' with itself");
      continue;
    }
    if (c.path_a < 0 || c.path_a >= int(a.paths.size()) || c.path_b < 0 || c.path_b >= int(b.paths.size())) {
      fail("conflict point references a missing path");
      continue;
    }
    const double la = a.paths[std::size_t(c.path_a)].path.length();
    const double lb = b.paths[std::size_t(c.path_b)].path.length();
    if (c.dist_a < 0 || c.dist_a > la + 1e-9 || c.dist_b < 0 || c.dist_b > lb + 1e-9)
      fail("conflict point '" + a.id + "' x '" + b.id + "' lies beyond a path length");
    if (c.yielding != c.movement_a && c.yielding != c.movement_b)
      fail("conflict point '" + a.id + "' x '" + b.id + "' yields to an unrelated movement");
    // A pair registered in both orientations would be reported twice.
    const bool flip = c.movement_a > c.movement_b;
    const auto key = flip ? std::make_tuple(c.movement_b, c.movement_a, c.path_b, c.path_a,
                                            std::llround(c.dist_b * 1e3), std::llround(c.dist_a * 1e3))
                          : std::make_tuple(c.movement_a, c.movement_b, c.path_a, c.path_b,
                                            std::llround(c.dist_a * 1e3), std::llround(c.dist_b * 1e3));
    if (!seen.insert(key).second) fail("conflict point '" + a.id + "' x '" + b.id + "' registered twice");
  }
  return bad;
}

std::vector<OrientedConflict> conflicting_movements(const Network& net, int m) {
  if (m < 0 || m >= int(net.movements.size())) throw InputError("movement index out of range");
  std::vector<OrientedConflict> out;
  for (std::size_t i = 0; i < net.conflicts.size(); ++i) {
    const auto& c = net.conflicts[i];
    if (c.movement_a == m)
      out.push_back({c.movement_b, c.path_a, c.path_b, c.dist_a, c.dist_b, c.yielding == m, int(i)});
    else if (c.movement_b == m)
      out.push_back({c.movement_a, c.path_b, c.path_a, c.dist_b, c.dist_a, c.yielding == m, int(i)});
  }
  return out;
}

std::vector<OrientedConflict> conflicting_movements(const Network& net, const std::string& id) {
  return conflicting_movements(net, net.movement_index(id));
}

namespace {

int priority_key(const Movement& m) {
  if (m.cls == StreamClass::pedestrian) return 0;
  switch (m.turn) {
    case Turn::through: return 1;
    case Turn::right: return 2;
    case Turn::left: return 3;
  }
  return 3;
}

// Index of the movement that yields: lower priority key wins right of way;
// non-motor beats motor on a tie, then the lower index.
int yielding_of(const std::vector<Movement>& ms, int a, int b) {
  const auto& ma = ms[std::size_t(a)];
  const auto& mb = ms[std::size_t(b)];
  const int ka = priority_key(ma);
  const int kb = priority_key(mb);
  if (ka != kb) return ka > kb ? a : b;
  if (ma.cls != mb.cls) return ma.cls == StreamClass::motor ? a : b;
  return std::max(a, b);
}

bool near(Vec2 p, Vec2 q) { return geom::norm(p - q) < 1e-3; }

}  // namespace

std::vector<ConflictPoint> compute_conflicts(const std::vector<Movement>& ms) {
  std::vector<ConflictPoint> out;
  for (std::size_t a = 0; a < ms.size(); ++a) {
    for (std::size_t b = a + 1; b < ms.size(); ++b) {
      const bool ped_pair = ms[a].cls == StreamClass::pedestrian && ms[b].cls == StreamClass::pedestrian;
      if (ped_pair) continue;
      for (std::size_t pa = 0; pa < ms[a].paths.size(); ++pa) {
        for (std::size_t pb = 0; pb < ms[b].paths.size(); ++pb) {
          const auto& path_a = ms[a].paths[pa].path;
          const auto& path_b = ms[b].paths[pb].path;
          for (const auto& x : geom::intersect(path_a, path_b)) {
            // Shared entry (diverge) and shared exit (merge) points are lane
            // interactions, not crossings.
            if (near(x.at, path_a.start()) && near(x.at, path_b.start())) continue;
            if (near(x.at, path_a.end()) && near(x.at, path_b.end())) continue;
            ConflictPoint c;
            c.movement_a = int(a);
            c.movement_b = int(b);
            c.path_a = int(pa);
            c.path_b = int(pb);
            c.dist_a = x.s_a;
            c.dist_b = x.s_b;
            c.yielding = yielding_of(ms, int(a), int(b));
            c.at = x.at;
            out.push_back(c);
          }
        }
      }
    }
  }
  return out;
}

void CrossParams::validate() const {
  for (std::size_t s = 0; s < 4; ++s) {
    if (motor_lanes[s] < 1) throw InputError("each approach needs at least one motor lane");
    if (motor_lanes[s] > 8) throw InputError("at most 8 motor lanes per approach");
    if (!lane_turns[s].empty() && int(lane_turns[s].size()) != motor_lanes[s])
      throw InputError("lane_turns must list one entry per motor lane");
    for (TurnSet t : lane_turns[s])
      if ((t & kAllTurns) == 0) throw InputError("a lane must allow at least one turn");
  }
  if (!(lane_width > 0) || !(non_motor_lane_width > 0)) throw InputError("lane widths must be > 0");
  if (!(approach_length > 0) || !(exit_length > 0)) throw InputError("link lengths must be > 0");
  if (!(speed_limit > 0)) throw InputError("speed limit must be > 0");
  if (!(motor_turn_radius > 0 && motor_turn_radius <= 1) ||
      !(non_motor_turn_radius > 0 && non_motor_turn_radius <= 1))
    throw InputError("turn radius fractions must lie in (0, 1]");
  if (!(box_margin >= 0)) throw InputError("box margin must be >= 0");
  if (!(crosswalk_inset >= 0)) throw InputError("crosswalk inset must be >= 0");
}

std::vector<TurnSet> default_lane_turns(int n) {
  const TurnSet l = turn_bit(Turn::left);
  const TurnSet t = turn_bit(Turn::through);
  const TurnSet r = turn_bit(Turn::right);
  if (n <= 0) return {};
  if (n == 1) return {kAllTurns};
  if (n == 2) return {TurnSet(t | r), TurnSet(l | t)};
  std::vector<TurnSet> out(std::size_t(n), t);
  out.front() = TurnSet(t | r);
  out.back() = l;
  return out;
}

std::string movement_id(Side from, Turn t, StreamClass c) {
  const char* tc = t == Turn::left ? "L" : t == Turn::through ? "T" : "R";
  std::string id = std::string(bound_label(from)) + "_" + tc;
  if (c == StreamClass::non_motor) id += "_nm";
  return id;
}

std::string pedestrian_id(Side leg) {
  static const char* names[] = {"N", "E", "S", "W"};
  return std::string("ped_") + names[int(leg)];
}

namespace {

std::vector<Lane> leg_lanes(const CrossParams& p, Side s) {
  std::vector<Lane> lanes;
  if (p.non_motor_lane) {
    Lane nm;
    nm.width = p.non_motor_lane_width;
    nm.motor = false;
    nm.non_motor = true;
    nm.turns = kAllTurns;
    lanes.push_back(nm);
  }
  const int n = p.motor_lanes[std::size_t(s)];
  const auto turns = p.lane_turns[std::size_t(s)].empty() ? default_lane_turns(n) : p.lane_turns[std::size_t(s)];
  for (int i = 0; i < n; ++i) {
    Lane ln;
    ln.width = p.lane_width;
    ln.turns = turns[std::size_t(i)];
    ln.non_motor = !p.non_motor_lane && i == 0;
    lanes.push_back(ln);
  }
  if (!p.non_motor_lane) lanes.front().turns = kAllTurns;  // shared nearside lane carries non-motor turns
  for (std::size_t i = 0; i < lanes.size(); ++i) lanes[i].index = int(i);
  return lanes;
}

// Distance of each lane centre to the right of the road centreline.
std::vector<double> lane_offsets(const std::vector<Lane>& lanes) {
  std::vector<double> off(lanes.size());
  double outer = 0.0;
  for (std::size_t i = lanes.size(); i-- > 0;) {
    off[i] = outer + lanes[i].width / 2.0;
    outer += lanes[i].width;
  }
  return off;
}

double road_width(const std::vector<Lane>& lanes) {
  double w = 0.0;
  for (const auto& l : lanes) w += l.width;
  return w;
}

}  // namespace

Network standard_cross_intersection(const CrossParams& p) {
  p.validate();
  Network net;
  constexpr std::array<Side, 4> sides{Side::north, Side::east, Side::south, Side::west};

  std::array<std::vector<Lane>, 4> lanes;
  double half = 0.0;
  for (Side s : sides) {
    lanes[std::size_t(s)] = leg_lanes(p, s);
    half = std::max(half, road_width(lanes[std::size_t(s)]));
  }
  const double box = half + p.box_margin;

  std::array<int, 4> in_link{}, out_link{};
  for (Side s : sides) {
    Link in;
    in.id = std::string(bound_label(s)) + "_in";
    in.length = p.approach_length;
    in.lanes = lanes[std::size_t(s)];
    in.speed_limit = p.speed_limit;
    in.direction = std::string(bound_label(s)) + " approach";
    in.role = LinkRole::approach;
    in.side = s;
    in.node = net.node;
    in_link[std::size_t(s)] = int(net.links.size());
    net.links.push_back(in);
  }
  for (Side s : sides) {
    // The exit towards side s carries the same bound as the approach opposite.
    const Side from = Side((int(s) + 2) % 4);
    Link out;
    out.id = std::string(bound_label(from)) + "_out";
    out.length = p.exit_length;
    out.lanes = lanes[std::size_t(s)];
    for (auto& l : out.lanes) l.turns = kAllTurns;
    out.speed_limit = p.speed_limit;
    out.direction = std::string(bound_label(from)) + " exit";
    out.role = LinkRole::exit;
    out.side = s;
    out.node = net.node;
    out_link[std::size_t(s)] = int(net.links.size());
    net.links.push_back(out);
  }

  for (StreamClass cls : {StreamClass::motor, StreamClass::non_motor}) {
    for (Side s : sides) {
      const auto& from = net.links[std::size_t(in_link[std::size_t(s)])];
      const auto in_off = lane_offsets(from.lanes);
      const Vec2 d = inbound_heading(s);
      for (Turn t : {Turn::left, Turn::through, Turn::right}) {
        const Side xs = exit_side(s, t);
        const auto& to = net.links[std::size_t(out_link[std::size_t(xs)])];
        const auto out_off = lane_offsets(to.lanes);
        const Vec2 e = outbound_heading(xs);

        std::vector<int> to_lanes;
        for (const auto& l : to.lanes)
          if (l.admits(cls)) to_lanes.push_back(l.index);

        Movement m;
        m.id = movement_id(s, t, cls);
        m.from_link = in_link[std::size_t(s)];
        m.to_link = out_link[std::size_t(xs)];
        m.turn = t;
        m.cls = cls;
        std::vector<int> entries;
        for (const auto& l : from.lanes)
          if (l.admits(cls) && l.allows(t)) entries.push_back(l.index);
        for (std::size_t k = 0; k < entries.size(); ++k) {
          const int lane = entries[k];
          int target;
          if (t == Turn::right)
            target = to_lanes.front();
          else if (t == Turn::left)
            target = to_lanes.back();
          else {
            // Through lanes keep their rank among lanes of the class.
            int rank = 0;
            for (const auto& l : from.lanes)
              if (l.admits(cls) && l.index < lane) ++rank;
            target = to_lanes[std::size_t(std::min<int>(rank, int(to_lanes.size()) - 1))];
          }
          const Vec2 start = -box * d + in_off[std::size_t(lane)] * geom::right_of(d);
          const Vec2 end = box * e + out_off[std::size_t(target)] * geom::right_of(e);
          LanePath lp;
          lp.from_lane = lane;
          lp.to_lane = target;
          const double radius = cls == StreamClass::motor ? p.motor_turn_radius : p.non_motor_turn_radius;
          lp.path = t == Turn::through ? geom::Path::segment(start, end) : geom::Path::turn(start, d, end, e, radius);
          m.from_lanes.push_back(lane);
          m.paths.push_back(std::move(lp));
        }
        if (m.paths.empty())
          throw InputError("no lane on the " + std::string(to_string(s)) + " approach serves " + m.id);
        net.movements.push_back(std::move(m));
      }
    }
  }

  for (Side leg : sides) {
    const Vec2 e = outbound_heading(leg);
    const Vec2 r = geom::right_of(e);
    const double w = road_width(lanes[std::size_t(leg)]);
    const double c = box - p.crosswalk_inset;
    Movement m;
    m.id = pedestrian_id(leg);
    m.from_link = in_link[std::size_t(leg)];
    m.to_link = out_link[std::size_t(leg)];
    m.turn = Turn::through;
    m.cls = StreamClass::pedestrian;
    LanePath lp;
    lp.path = geom::Path::segment(c * e - w * r, c * e + w * r);
    m.paths.push_back(std::move(lp));
    net.movements.push_back(std::move(m));
  }

  net.conflicts = compute_conflicts(net.movements);
  return net;
}

}  // namespace fuzzsim::net
