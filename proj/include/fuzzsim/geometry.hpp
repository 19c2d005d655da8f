#pragma once

// Planar paths through the intersection box: straight segments and circular
// arcs, with exact pairwise intersection.

#include <cmath>
#include <vector>

namespace fuzzsim::geom {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2, Vec2) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
/// Right-hand normal of a heading.
inline Vec2 right_of(Vec2 d) { return {d.y, -d.x}; }
inline Vec2 left_of(Vec2 d) { return {-d.y, d.x}; }

struct Piece {
  bool arc = false;
  // line: from -> to
  Vec2 from, to;
  // arc: centre, radius, start angle, signed sweep (ccw positive)
  Vec2 centre;
  double radius = 0.0;
  double start_angle = 0.0;
  double sweep = 0.0;
  double length = 0.0;

  Vec2 point_at(double s) const;
};

/// Arc-length parameterised chain of pieces.
class Path {
 public:
  Path() = default;

  static Path segment(Vec2 a, Vec2 b);
  /// From `p0` heading `d0` to `p1` heading `d1` (perpendicular unit
  /// headings): straight, quarter arc of radius factor*min(leg lengths),
  /// straight. Throws InputError when the headings cannot meet ahead.
  static Path turn(Vec2 p0, Vec2 d0, Vec2 p1, Vec2 d1, double radius_factor = 1.0);

  double length() const noexcept { return length_; }
  const std::vector<Piece>& pieces() const noexcept { return pieces_; }
  Vec2 point_at(double s) const;
  Vec2 start() const { return point_at(0.0); }
  Vec2 end() const { return point_at(length_); }

 private:
  void add(Piece p);
  std::vector<Piece> pieces_;
  double length_ = 0.0;
};

struct Crossing {
  double s_a = 0.0;  // arc length along the first path
  double s_b = 0.0;  // arc length along the second path
  Vec2 at;
};

/// Transversal intersections of two paths. Tangential contacts and collinear
/// overlaps are not crossings.
std::vector<Crossing> intersect(const Path& a, const Path& b);

}  // namespace fuzzsim::geom
