#pragma once

#include <array>
#include <vector>

#include "motrack/pointcloud.hpp"

namespace motrack {

// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

// Oriented 3D box, yaw about the up-axis. w/l/h are the extents along the
// box-frame x/y/z axes.
struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double w = 0.0, l = 0.0, h = 0.0;
  double yaw = 0.0;

  Box3D() = default;
  Box3D(double cx_, double cy_, double cz_, double w_, double l_, double h_,
        double yaw_)
      : cx(cx_), cy(cy_), cz(cz_), w(w_), l(l_), h(h_), yaw(wrap_angle(yaw_)) {}

  Vec3 center() const { return {cx, cy, cz}; }
  Vec3 size() const { return {w, l, h}; }
  double volume() const { return w * l * h; }
};

// 4-DOF relative motion, expressed in the previous box's canonical frame.
struct MotionVector {
  double dx = 0.0, dy = 0.0, dz = 0.0, dyaw = 0.0;

  MotionVector() = default;
  MotionVector(double dx_, double dy_, double dz_, double dyaw_)
      : dx(dx_), dy(dy_), dz(dz_), dyaw(wrap_angle(dyaw_)) {}
};

// Yaw-only rotation followed by a translation.
struct RigidPose {
  double yaw = 0.0;
  Vec3 t;

  Vec3 apply(const Vec3& p) const;
  RigidPose inverse() const;
  // Composition: (a * b).apply(p) == a.apply(b.apply(p)).
  RigidPose compose(const RigidPose& b) const;

  // Pose placing a unit frame at the box center with the box yaw.
  static RigidPose of_box(const Box3D& b) { return {b.yaw, b.center()}; }
};

// Corners ordered bottom face CCW then top face CCW (seen from above),
// starting at the (+w/2, +l/2) corner.
std::array<Vec3, 8> box_corners(const Box3D& b);

// World -> canonical w.r.t. ref (ref center maps to origin, ref yaw to 0).
PointCloud to_canonical(const PointCloud& points, const Box3D& ref);
PointCloud from_canonical(const PointCloud& points, const Box3D& ref);
Box3D box_to_canonical(const Box3D& b, const Box3D& ref);
Box3D box_from_canonical(const Box3D& b, const Box3D& ref);

// Advances prev by a motion expressed in prev's canonical frame. Size is
// carried over unchanged.
Box3D apply_rtm(const Box3D& prev, const MotionVector& m);

// Motion that maps prev onto curr (both world frame), expressed in prev's
// canonical frame: apply_rtm(prev, relative_motion(prev, curr)) == curr.
MotionVector relative_motion(const Box3D& prev, const Box3D& curr);

// Area of the BEV intersection of the two boxes' footprints (convex polygon
// clipping; exact).
double bev_intersection_area(const Box3D& a, const Box3D& b);

// Volume IoU: BEV polygon intersection area times vertical interval overlap.
double iou3d(const Box3D& a, const Box3D& b);

// Euclidean distance of the 3D centers.
double center_distance(const Box3D& a, const Box3D& b);

// True when p lies inside b inflated by `inflate` on every extent.
bool box_contains(const Box3D& b, const Vec3& p, double inflate = 0.0);

}  // namespace motrack
