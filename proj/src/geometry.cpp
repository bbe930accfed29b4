#include "motrack/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace motrack {

namespace {

constexpr double kPi = 3.14159265358979323846;
// Clipped polygons with signed area below this are treated as empty.
constexpr double kDegenerateArea = 1e-12;

struct Vec2 {
  double x = 0.0, y = 0.0;
};

// Shoelace formula; positive for CCW vertex order.
double signed_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

std::array<Vec2, 4> bev_footprint(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hw = 0.5 * b.w, hl = 0.5 * b.l;
  // CCW: (+,+), (-,+), (-,-), (+,-) in the box frame.
  const double lx[4] = {hw, -hw, -hw, hw};
  const double ly[4] = {hl, hl, -hl, -hl};
  std::array<Vec2, 4> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = {b.cx + c * lx[i] - s * ly[i], b.cy + s * lx[i] + c * ly[i]};
  }
  return out;
}

// Sutherland-Hodgman: clip subject polygon against the half-plane left of
// edge a->b (CCW clip polygon => interior is the left side).
std::vector<Vec2> clip_edge(const std::vector<Vec2>& subject, const Vec2& a,
                            const Vec2& b) {
  std::vector<Vec2> out;
  out.reserve(subject.size() + 1);
  const std::size_t n = subject.size();
  auto side = [&](const Vec2& p) {
    return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
  };
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& cur = subject[i];
    const Vec2& nxt = subject[(i + 1) % n];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= 0.0) out.push_back(cur);
    if ((sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0)) {
      const double t = sc / (sc - sn);
      out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
    }
  }
  return out;
}

}  // namespace

double wrap_angle(double a) {
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r <= 0.0) r += 2.0 * kPi;
  return r - kPi;
}

Vec3 RigidPose::apply(const Vec3& p) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * p.x - s * p.y + t.x, s * p.x + c * p.y + t.y, p.z + t.z};
}

RigidPose RigidPose::inverse() const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  // R^-1 * (-t)
  return {wrap_angle(-yaw), {-(c * t.x + s * t.y), -(-s * t.x + c * t.y), -t.z}};
}

RigidPose RigidPose::compose(const RigidPose& b) const {
  return {wrap_angle(yaw + b.yaw), apply(b.t)};
}

std::array<Vec3, 8> box_corners(const Box3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double hw = 0.5 * b.w, hl = 0.5 * b.l, hh = 0.5 * b.h;
  const double lx[4] = {hw, -hw, -hw, hw};
  const double ly[4] = {hl, hl, -hl, -hl};
  std::array<Vec3, 8> out;
  for (int f = 0; f < 2; ++f) {
    const double z = b.cz + (f == 0 ? -hh : hh);
    for (int i = 0; i < 4; ++i) {
      out[4 * f + i] = {b.cx + c * lx[i] - s * ly[i],
                        b.cy + s * lx[i] + c * ly[i], z};
    }
  }
  return out;
}

PointCloud to_canonical(const PointCloud& points, const Box3D& ref) {
  const RigidPose inv = RigidPose::of_box(ref).inverse();
  PointCloud out;
  out.frame = Frame::Canonical;
  out.points.reserve(points.size());
  for (const Vec3& p : points.points) out.points.push_back(inv.apply(p));
  return out;
}

PointCloud from_canonical(const PointCloud& points, const Box3D& ref) {
  const RigidPose pose = RigidPose::of_box(ref);
  PointCloud out;
  out.frame = Frame::World;
  out.points.reserve(points.size());
  for (const Vec3& p : points.points) out.points.push_back(pose.apply(p));
  return out;
}

Box3D box_to_canonical(const Box3D& b, const Box3D& ref) {
  const RigidPose inv = RigidPose::of_box(ref).inverse();
  const Vec3 c = inv.apply(b.center());
  return {c.x, c.y, c.z, b.w, b.l, b.h, wrap_angle(b.yaw - ref.yaw)};
}

Box3D box_from_canonical(const Box3D& b, const Box3D& ref) {
  const RigidPose pose = RigidPose::of_box(ref);
  const Vec3 c = pose.apply(b.center());
  return {c.x, c.y, c.z, b.w, b.l, b.h, wrap_angle(b.yaw + ref.yaw)};
}

Box3D apply_rtm(const Box3D& prev, const MotionVector& m) {
  const RigidPose pose = RigidPose::of_box(prev);
  const Vec3 c = pose.apply({m.dx, m.dy, m.dz});
  return {c.x, c.y, c.z, prev.w, prev.l, prev.h, wrap_angle(prev.yaw + m.dyaw)};
}

MotionVector relative_motion(const Box3D& prev, const Box3D& curr) {
  const RigidPose inv = RigidPose::of_box(prev).inverse();
  const Vec3 d = inv.apply(curr.center());
  return {d.x, d.y, d.z, wrap_angle(curr.yaw - prev.yaw)};
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto fa = bev_footprint(a);
  const auto fb = bev_footprint(b);
  std::vector<Vec2> poly(fa.begin(), fa.end());
  for (int i = 0; i < 4 && !poly.empty(); ++i) {
    poly = clip_edge(poly, fb[i], fb[(i + 1) % 4]);
  }
  if (poly.size() < 3) return 0.0;
  const double area = signed_area(poly);
  return area < kDegenerateArea ? 0.0 : area;
}

double iou3d(const Box3D& a, const Box3D& b) {
  const double area = bev_intersection_area(a, b);
  const double zlo = std::max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  const double zhi = std::min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double inter = area * std::max(0.0, zhi - zlo);
  const double uni = a.volume() + b.volume() - inter;
  return uni <= 0.0 ? 0.0 : inter / uni;
}

double center_distance(const Box3D& a, const Box3D& b) {
  const double dx = a.cx - b.cx, dy = a.cy - b.cy, dz = a.cz - b.cz;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool box_contains(const Box3D& b, const Vec3& p, double inflate) {
  const RigidPose inv = RigidPose::of_box(b).inverse();
  const Vec3 q = inv.apply(p);
  return std::abs(q.x) <= 0.5 * b.w + inflate &&
         std::abs(q.y) <= 0.5 * b.l + inflate &&
         std::abs(q.z) <= 0.5 * b.h + inflate;
}

}  // namespace motrack
