#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace gpnav {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Vec2 a, Vec2 b) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
/// z-component of the 3-D cross product; positive when b is counter-clockwise of a.
constexpr double det(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
constexpr double norm_sq(Vec2 a) { return dot(a, a); }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

inline Vec2 normalized(Vec2 a) {
  const double n = norm(a);
  return n > 0.0 ? a / n : Vec2{};
}

inline Vec2 rotate(Vec2 a, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

inline Vec2 unit_vector(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  if (a > -kPi && a <= kPi) return a;
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

/// Expresses a world-frame point in the body frame of a robot at `origin` with `heading`.
inline Vec2 to_body(Vec2 world, Vec2 origin, double heading) {
  return rotate(world - origin, -heading);
}

inline Vec2 to_world(Vec2 body, Vec2 origin, double heading) {
  return origin + rotate(body, heading);
}

struct Polar {
  double distance = 0.0;
  double bearing = 0.0;
};

inline Polar to_polar(Vec2 body) { return {norm(body), std::atan2(body.y, body.x)}; }
inline Vec2 from_polar(Polar p) { return unit_vector(p.bearing) * p.distance; }

struct CircleObstacle {
  Vec2 center;
  double radius = 0.0;
};

/// A wall: the rectangle swept by a segment from `a` to `b` thickened by `thickness`
/// (half on each side). The rectangle does not extend past the endpoints.
struct WallObstacle {
  Vec2 a;
  Vec2 b;
  double thickness = 0.1;
};

struct Box2 {
  Vec2 center;
  Vec2 axis;  // unit vector along the wall
  double half_length = 0.0;
  double half_width = 0.0;
};

inline Box2 wall_box(const WallObstacle& w) {
  const Vec2 d = w.b - w.a;
  const double len = norm(d);
  return {(w.a + w.b) * 0.5, len > 0.0 ? d / len : Vec2{1.0, 0.0}, 0.5 * len, 0.5 * w.thickness};
}

/// Signed distance from p to the circle surface (negative inside).
inline double signed_distance(Vec2 p, const CircleObstacle& c) {
  return distance(p, c.center) - c.radius;
}

/// Signed distance from p to the box surface (negative inside).
inline double signed_distance(Vec2 p, const Box2& b) {
  const Vec2 rel = p - b.center;
  const Vec2 local{dot(rel, b.axis), det(b.axis, rel)};
  const double qx = std::abs(local.x) - b.half_length;
  const double qy = std::abs(local.y) - b.half_width;
  const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
  const double inside = std::min(std::max(qx, qy), 0.0);
  return outside + inside;
}

inline double signed_distance(Vec2 p, const WallObstacle& w) { return signed_distance(p, wall_box(w)); }

/// Closest point of the box (boundary or interior) to p.
inline Vec2 closest_point(Vec2 p, const Box2& b) {
  const Vec2 rel = p - b.center;
  const double lx = std::clamp(dot(rel, b.axis), -b.half_length, b.half_length);
  const double ly = std::clamp(det(b.axis, rel), -b.half_width, b.half_width);
  const Vec2 normal{-b.axis.y, b.axis.x};
  return b.center + b.axis * lx + normal * ly;
}

/// First non-negative ray parameter at which origin + t*dir meets the circle, for unit dir.
/// A ray starting inside the circle reports the exit point.
inline std::optional<double> ray_intersect(Vec2 origin, Vec2 dir, const CircleObstacle& c) {
  const Vec2 oc = origin - c.center;
  const double b = dot(oc, dir);
  const double cc = norm_sq(oc) - c.radius * c.radius;
  const double disc = b * b - cc;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  // Numerically stable near root.
  const double t0 = -b - s;
  const double t1 = -b + s;
  if (t0 >= 0.0) {
    if (cc > 0.0 && b < 0.0) return cc / (-b + s);
    return t0;
  }
  if (t1 >= 0.0) return t1;
  return std::nullopt;
}

/// Slab test against an oriented box, for unit dir.
inline std::optional<double> ray_intersect(Vec2 origin, Vec2 dir, const Box2& b) {
  const Vec2 rel = origin - b.center;
  const Vec2 o{dot(rel, b.axis), det(b.axis, rel)};
  const Vec2 d{dot(dir, b.axis), det(b.axis, dir)};
  double t_enter = -kInf;
  double t_exit = kInf;
  const double lo[2] = {-b.half_length, -b.half_width};
  const double hi[2] = {b.half_length, b.half_width};
  const double oo[2] = {o.x, o.y};
  const double dd[2] = {d.x, d.y};
  for (int k = 0; k < 2; ++k) {
    if (std::abs(dd[k]) < 1e-15) {
      if (oo[k] < lo[k] || oo[k] > hi[k]) return std::nullopt;
      continue;
    }
    double ta = (lo[k] - oo[k]) / dd[k];
    double tb = (hi[k] - oo[k]) / dd[k];
    if (ta > tb) std::swap(ta, tb);
    t_enter = std::max(t_enter, ta);
    t_exit = std::min(t_exit, tb);
  }
  if (t_enter > t_exit || t_exit < 0.0) return std::nullopt;
  return t_enter >= 0.0 ? t_enter : t_exit;
}

inline std::optional<double> ray_intersect(Vec2 origin, Vec2 dir, const WallObstacle& w) {
  return ray_intersect(origin, dir, wall_box(w));
}

}  // namespace gpnav
