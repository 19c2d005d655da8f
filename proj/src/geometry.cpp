#include "fuzzsim/geometry.hpp"

#include <algorithm>
#include <numbers>

#include "fuzzsim/errors.hpp"

namespace fuzzsim::geom {

namespace {

constexpr double kEps = 1e-9;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double a) {
  a = std::fmod(a, kTwoPi);
  return a < 0 ? a + kTwoPi : a;
}

// Arc length along an arc piece for a point known to lie on its circle, or
// -1 when the point is outside the swept range.
double arc_param(const Piece& p, Vec2 q) {
  const double theta = std::atan2(q.y - p.centre.y, q.x - p.centre.x);
  const double delta = p.sweep > 0 ? wrap(theta - p.start_angle) : wrap(p.start_angle - theta);
  const double span = std::abs(p.sweep);
  if (delta <= span + kEps) return std::min(delta, span) * p.radius;
  if (delta >= kTwoPi - kEps) return 0.0;
  return -1.0;
}

double line_param(const Piece& p, Vec2 q) {
  const Vec2 d = p.to - p.from;
  const double t = dot(q - p.from, d) / dot(d, d);
  if (t < -kEps || t > 1.0 + kEps) return -1.0;
  return std::clamp(t, 0.0, 1.0) * p.length;
}

// Line/circle: points of the segment on the circle, skipping tangency.
std::vector<Vec2> line_circle(const Piece& line, Vec2 c, double r) {
  const Vec2 d = line.to - line.from;
  const Vec2 f = line.from - c;
  const double a = dot(d, d);
  const double b = 2.0 * dot(f, d);
  const double cc = dot(f, f) - r * r;
  const double disc = b * b - 4.0 * a * cc;
  if (disc <= 1e-9 * a * r * r) return {};
  const double sq = std::sqrt(disc);
  std::vector<Vec2> out;
  for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)})
    if (t >= -kEps && t <= 1.0 + kEps) out.push_back(line.from + t * d);
  return out;
}

std::vector<Vec2> circle_circle(Vec2 c0, double r0, Vec2 c1, double r1) {
  const Vec2 d = c1 - c0;
  const double dist = norm(d);
  if (dist < kEps || dist >= r0 + r1 - 1e-9 || dist <= std::abs(r0 - r1) + 1e-9) return {};
  const double a = (r0 * r0 - r1 * r1 + dist * dist) / (2 * dist);
  const double h = std::sqrt(std::max(0.0, r0 * r0 - a * a));
  const Vec2 m = c0 + (a / dist) * d;
  const Vec2 n{-d.y / dist, d.x / dist};
  return {m + h * n, m - h * n};
}

std::vector<std::pair<double, double>> piece_crossings(const Piece& p, const Piece& q) {
  std::vector<std::pair<double, double>> out;
  if (!p.arc && !q.arc) {
    const Vec2 r = p.to - p.from;
    const Vec2 s = q.to - q.from;
    const double denom = cross(r, s);
    if (std::abs(denom) < kEps * norm(r) * norm(s)) return out;  // parallel or collinear
    const double t = cross(q.from - p.from, s) / denom;
    const double u = cross(q.from - p.from, r) / denom;
    if (t >= -kEps && t <= 1 + kEps && u >= -kEps && u <= 1 + kEps)
      out.emplace_back(std::clamp(t, 0.0, 1.0) * p.length, std::clamp(u, 0.0, 1.0) * q.length);
    return out;
  }
  if (p.arc && q.arc) {
    for (Vec2 x : circle_circle(p.centre, p.radius, q.centre, q.radius)) {
      const double sa = arc_param(p, x);
      const double sb = arc_param(q, x);
      if (sa >= 0 && sb >= 0) out.emplace_back(sa, sb);
    }
    return out;
  }
  const Piece& line = p.arc ? q : p;
  const Piece& arc = p.arc ? p : q;
  for (Vec2 x : line_circle(line, arc.centre, arc.radius)) {
    const double sl = line_param(line, x);
    const double sa = arc_param(arc, x);
    if (sl < 0 || sa < 0) continue;
    if (p.arc)
      out.emplace_back(sa, sl);
    else
      out.emplace_back(sl, sa);
  }
  return out;
}

}  // namespace

Vec2 Piece::point_at(double s) const {
  if (!arc) {
    const double t = length > 0 ? s / length : 0.0;
    return from + t * (to - from);
  }
  const double theta = start_angle + (sweep > 0 ? 1.0 : -1.0) * s / radius;
  return centre + radius * Vec2{std::cos(theta), std::sin(theta)};
}

void Path::add(Piece p) {
  if (p.length <= 1e-12) return;
  pieces_.push_back(p);
  length_ += p.length;
}

Path Path::segment(Vec2 a, Vec2 b) {
  Path path;
  Piece p;
  p.from = a;
  p.to = b;
  p.length = norm(b - a);
  path.add(p);
  if (path.pieces_.empty()) throw InputError("degenerate path segment");
  return path;
}

Path Path::turn(Vec2 p0, Vec2 d0, Vec2 p1, Vec2 d1, double radius_factor) {
  // Corner K: p0 + a*d0 == p1 - b*d1.
  const double denom = cross(d0, d1);
  if (std::abs(denom) < kEps) throw InputError("turn headings must not be parallel");
  const Vec2 w = p1 - p0;
  const double a = cross(w, d1) / denom;
  const double b = cross(d0, w) / denom;
  if (!(a > 0 && b > 0)) throw InputError("turn corner lies behind the path ends");
  const Vec2 corner = p0 + a * d0;
  const double r = std::clamp(radius_factor, 1e-3, 1.0) * std::min(a, b);
  const Vec2 arc_start = corner - r * d0;
  const Vec2 arc_end = corner + r * d1;

  Path path;
  Piece lead;
  lead.from = p0;
  lead.to = arc_start;
  lead.length = a - r;
  path.add(lead);

  Piece arc;
  arc.arc = true;
  arc.centre = arc_start + r * d1;
  arc.radius = r;
  arc.start_angle = std::atan2(arc_start.y - arc.centre.y, arc_start.x - arc.centre.x);
  arc.sweep = (denom > 0 ? 1.0 : -1.0) * std::numbers::pi / 2.0;
  arc.length = r * std::numbers::pi / 2.0;
  path.add(arc);

  Piece tail;
  tail.from = arc_end;
  tail.to = p1;
  tail.length = b - r;
  path.add(tail);
  return path;
}

Vec2 Path::point_at(double s) const {
  s = std::clamp(s, 0.0, length_);
  for (const auto& p : pieces_) {
    if (s <= p.length) return p.point_at(s);
    s -= p.length;
  }
  return pieces_.back().point_at(pieces_.back().length);
}

std::vector<Crossing> intersect(const Path& a, const Path& b) {
  std::vector<Crossing> out;
  double base_a = 0.0;
  for (const auto& pa : a.pieces()) {
    double base_b = 0.0;
    for (const auto& pb : b.pieces()) {
      for (auto [sa, sb] : piece_crossings(pa, pb)) {
        const Crossing c{base_a + sa, base_b + sb, pa.point_at(sa)};
        // Pieces share endpoints; keep one copy of a crossing found twice.
        const bool dup = std::any_of(out.begin(), out.end(), [&](const Crossing& o) {
          return std::abs(o.s_a - c.s_a) < 1e-6 && std::abs(o.s_b - c.s_b) < 1e-6;
        });
        if (!dup) out.push_back(c);
      }
      base_b += pb.length;
    }
    base_a += pa.length;
  }
  return out;
}

}  // namespace fuzzsim::geom
