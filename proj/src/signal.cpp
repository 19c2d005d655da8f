#include "fuzzsim/signal.hpp"

#include <algorithm>
#include <cmath>

#include "fuzzsim/errors.hpp"

namespace fuzzsim::signal {

using net::Side;
using net::StreamClass;
using net::Turn;

double PhasePlan::cycle() const noexcept {
  double c = 0.0;
  for (const auto& p : phases) c += p.green;
  return c + intergreen * double(phases.size());
}

namespace {

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

// Position within the cycle and the phase it falls in (-1: intergreen).
std::pair<double, int> locate(const PhasePlan& plan, double t) {
  const double cycle = plan.cycle();
  if (!(cycle > 0)) return {0.0, -1};
  double pos = std::fmod(t + plan.offset, cycle);
  if (pos < 0) pos += cycle;
  double start = 0.0;
  for (std::size_t i = 0; i < plan.phases.size(); ++i) {
    const double end = start + plan.phases[i].green;
    if (pos < end) return {pos, int(i)};
    start = end + plan.intergreen;
    if (pos < start) return {pos, -1};
  }
  return {pos, -1};
}

}  // namespace

SignalState signal_state(const PhasePlan& plan, double t) {
  SignalState s;
  s.phase = locate(plan, t).second;
  if (s.phase >= 0) {
    const auto& ph = plan.phases[std::size_t(s.phase)];
    s.green.insert(ph.permitted.begin(), ph.permitted.end());
    s.permissive.insert(ph.permissive.begin(), ph.permissive.end());
  }
  for (const auto& id : plan.uncontrolled) {
    s.green.insert(id);
    s.permissive.insert(id);
  }
  return s;
}

std::vector<std::string> validate_plan(const PhasePlan& plan, const net::Network& net) {
  std::vector<std::string> bad;
  auto fail = [&](const std::string& what) { bad.push_back(what); };
  if (plan.phases.empty()) fail("plan '" + plan.name + "' has no phases");
  if (!(plan.intergreen >= 0)) fail("intergreen must be >= 0");
  if (!std::isfinite(plan.offset)) fail("offset must be finite");
  if (!plan.phases.empty() && !(plan.cycle() > 0)) fail("cycle must be > 0");

  auto known = [&](const std::string& id, const std::string& where) {
    if (net.find_movement(id) >= 0) return true;
    fail(where + " references unknown movement '" + id + "'");
    return false;
  };

  for (const auto& id : plan.uncontrolled) known(id, "uncontrolled set");
  for (const auto& id : plan.twice_crossing) {
    if (!known(id, "twice-crossing set")) continue;
    const auto& m = net.movements[std::size_t(net.find_movement(id))];
    if (m.cls != StreamClass::non_motor || m.turn != Turn::left)
      fail("twice crossing applies to non-motor lefts only, not '" + id + "'");
    const Side from = net.links[std::size_t(m.from_link)].side;
    const Side to = net::exit_side(from, Turn::left);
    const Side second_from = Side((int(to) + 2) % 4);
    for (const auto& sub : {net::movement_id(from, Turn::through, StreamClass::non_motor),
                            net::movement_id(second_from, Turn::through, StreamClass::non_motor)})
      if (net.find_movement(sub) < 0) fail("twice crossing of '" + id + "' needs movement '" + sub + "'");
  }

  std::vector<char> served(net.movements.size(), 0);
  for (std::size_t k = 0; k < plan.phases.size(); ++k) {
    const auto& ph = plan.phases[k];
    const std::string where = "phase " + std::to_string(k) + (ph.name.empty() ? "" : " (" + ph.name + ")");
    if (!(ph.green > 0)) fail(where + " green must be > 0");
    for (const auto& id : ph.permissive)
      if (!contains(ph.permitted, id)) fail(where + " permissive movement '" + id + "' is not permitted");
    std::vector<int> prot;
    for (const auto& id : ph.permitted) {
      if (!known(id, where)) continue;
      const int m = net.find_movement(id);
      served[std::size_t(m)] = 1;
      if (!contains(ph.permissive, id) && !contains(plan.uncontrolled, id)) prot.push_back(m);
    }
    std::sort(prot.begin(), prot.end());
    for (const auto& c : net.conflicts) {
      if (std::binary_search(prot.begin(), prot.end(), c.movement_a) &&
          std::binary_search(prot.begin(), prot.end(), c.movement_b))
        fail(where + " gives protected green to conflicting '" + net.movements[std::size_t(c.movement_a)].id +
             "' and '" + net.movements[std::size_t(c.movement_b)].id + "'");
    }
  }
  for (std::size_t m = 0; m < net.movements.size(); ++m) {
    const auto& id = net.movements[m].id;
    if (!served[m] && !contains(plan.uncontrolled, id) && !contains(plan.twice_crossing, id))
      fail("movement '" + id + "' never receives green");
  }
  std::sort(bad.begin(), bad.end());
  bad.erase(std::unique(bad.begin(), bad.end()), bad.end());
  return bad;
}

std::vector<double> default_greens(int which) {
  switch (which) {
    case 1: return {25, 25, 25, 25};
    case 2: return {30, 20, 30, 20};
    case 3: return {45, 45};
  }
  throw InputError("unknown built-in plan " + std::to_string(which));
}

namespace {

std::string mid(Side s, Turn t, StreamClass c = StreamClass::motor) { return net::movement_id(s, t, c); }

void require(const net::Network& n, const std::vector<std::string>& ids) {
  for (const auto& id : ids)
    if (n.find_movement(id) < 0) throw InputError("built-in plans need a standard cross; missing '" + id + "'");
}

}  // namespace

PhasePlan builtin_plan(int which, const net::Network& net, std::vector<double> greens, double intergreen) {
  if (greens.empty()) greens = default_greens(which);
  PhasePlan plan;
  plan.name = "plan" + std::to_string(which);
  plan.intergreen = intergreen;
  constexpr StreamClass nm = StreamClass::non_motor;

  auto rights = [&] {
    std::vector<std::string> out;
    for (Side s : {Side::north, Side::east, Side::south, Side::west})
      for (StreamClass c : {StreamClass::motor, nm}) out.push_back(mid(s, Turn::right, c));
    return out;
  };

  if (which == 1) {
    // Clockwise service order so a twice-crossing left finds its second
    // crossing green in the next phase.
    for (Side s : {Side::south, Side::east, Side::north, Side::west}) {
      Phase ph;
      ph.name = std::string(net::bound_label(s));
      ph.permitted = {mid(s, Turn::left), mid(s, Turn::through), mid(s, Turn::through, nm),
                      net::pedestrian_id(net::exit_side(s, Turn::right))};
      plan.phases.push_back(ph);
      plan.twice_crossing.push_back(mid(s, Turn::left, nm));
    }
    plan.uncontrolled = rights();
  } else if (which == 2) {
    auto throughs = [&](Side a, Side b, const char* name) {
      Phase ph;
      ph.name = name;
      ph.permitted = {mid(a, Turn::through), mid(b, Turn::through), mid(a, Turn::through, nm),
                      mid(b, Turn::through, nm), net::pedestrian_id(net::exit_side(a, Turn::right)),
                      net::pedestrian_id(net::exit_side(b, Turn::right))};
      return ph;
    };
    auto lefts = [&](Side a, Side b, const char* name) {
      Phase ph;
      ph.name = name;
      ph.permitted = {mid(a, Turn::left), mid(b, Turn::left), mid(a, Turn::left, nm), mid(b, Turn::left, nm)};
      // Opposing motor and non-motor lefts cross; the non-motor stream yields.
      ph.permissive = {mid(a, Turn::left, nm), mid(b, Turn::left, nm)};
      return ph;
    };
    plan.phases = {throughs(Side::south, Side::north, "NS through"), lefts(Side::south, Side::north, "NS left"),
                   throughs(Side::west, Side::east, "EW through"), lefts(Side::west, Side::east, "EW left")};
    plan.uncontrolled = rights();
  } else if (which == 3) {
    auto street = [&](Side a, Side b, const char* name) {
      Phase ph;
      ph.name = name;
      for (Side s : {a, b}) {
        for (StreamClass c : {StreamClass::motor, nm}) {
          for (Turn t : {Turn::left, Turn::through, Turn::right}) {
            ph.permitted.push_back(mid(s, t, c));
            if (t != Turn::through) ph.permissive.push_back(mid(s, t, c));
          }
        }
        ph.permitted.push_back(net::pedestrian_id(net::exit_side(s, Turn::right)));
      }
      return ph;
    };
    plan.phases = {street(Side::south, Side::north, "NS"), street(Side::west, Side::east, "EW")};
  } else {
    throw InputError("unknown built-in plan " + std::to_string(which));
  }

  if (greens.size() != plan.phases.size())
    throw InputError(plan.name + " needs " + std::to_string(plan.phases.size()) + " green durations");
  for (std::size_t i = 0; i < greens.size(); ++i) {
    if (!(greens[i] > 0)) throw InputError("green durations must be > 0");
    plan.phases[i].green = greens[i];
  }
  for (const auto& ph : plan.phases) require(net, ph.permitted);
  require(net, plan.uncontrolled);
  require(net, plan.twice_crossing);
  return plan;
}

PhasePlan builtin_plan(const std::string& name, const net::Network& net, std::vector<double> greens,
                       double intergreen) {
  if (name == "plan1") return builtin_plan(1, net, std::move(greens), intergreen);
  if (name == "plan2") return builtin_plan(2, net, std::move(greens), intergreen);
  if (name == "plan3") return builtin_plan(3, net, std::move(greens), intergreen);
  throw InputError("unknown built-in plan '" + name + "'");
}

CompiledPlan::CompiledPlan(const PhasePlan& plan, const net::Network& net)
    : plan_(plan), cycle_(plan.cycle()) {
  const auto bad = validate_plan(plan, net);
  if (!bad.empty()) throw ValidationError(bad);
  const std::size_t n = net.movements.size();
  uncontrolled_.assign(n, 0);
  twice_.assign(n, 0);
  for (const auto& id : plan.uncontrolled) uncontrolled_[std::size_t(net.movement_index(id))] = 1;
  for (const auto& id : plan.twice_crossing) twice_[std::size_t(net.movement_index(id))] = 1;
  double start = 0.0;
  for (const auto& ph : plan.phases) {
    starts_.push_back(start);
    start += ph.green + plan.intergreen;
    std::vector<Indication> row(n, Indication::red);
    for (const auto& id : ph.permitted) row[std::size_t(net.movement_index(id))] = Indication::protected_green;
    for (const auto& id : ph.permissive) row[std::size_t(net.movement_index(id))] = Indication::permissive_green;
    table_.push_back(std::move(row));
  }
}

double CompiledPlan::position(double t) const noexcept {
  double pos = std::fmod(t + plan_.offset, cycle_);
  return pos < 0 ? pos + cycle_ : pos;
}

int CompiledPlan::phase_at(double t) const noexcept {
  const double pos = position(t);
  for (std::size_t i = 0; i < starts_.size(); ++i) {
    if (pos < starts_[i]) return -1;
    if (pos < starts_[i] + plan_.phases[i].green) return int(i);
  }
  return -1;
}

Indication CompiledPlan::indication(int movement, double t) const noexcept {
  if (uncontrolled_[std::size_t(movement)]) return Indication::permissive_green;
  const int ph = phase_at(t);
  if (ph < 0) return Indication::red;
  return table_[std::size_t(ph)][std::size_t(movement)];
}

double CompiledPlan::green_remaining(int movement, double t) const noexcept {
  if (uncontrolled_[std::size_t(movement)]) return kForever;
  const int ph = phase_at(t);
  if (ph < 0 || table_[std::size_t(ph)][std::size_t(movement)] == Indication::red) return 0.0;
  return starts_[std::size_t(ph)] + plan_.phases[std::size_t(ph)].green - position(t);
}

}  // namespace fuzzsim::signal
