#!/usr/bin/env python3
"""Regenerates the miniature KITTI tracking fixture under tests/data/kitti_mini.

Three frames, one Car track. Ground-truth boxes are chosen in the LiDAR frame,
converted to camera-frame label rows through the same calib stored in the
fixture, and the point clouds are box-surface samples plus clutter. The
expected LiDAR boxes printed at the end are frozen into the C++ tests.
"""

import os
import struct

import numpy as np

OUT = os.path.join(os.path.dirname(__file__), "..", "tests", "data",
                   "kitti_mini")

# calib: velodyne -> unrectified cam, then rectification
R0 = np.array([[0.0, -1.0, 0.0],
               [0.0, 0.0, -1.0],
               [1.0, 0.0, 0.0]])
T0 = np.array([0.01, -0.05, -0.29])
ang = 0.02
R_RECT = np.array([[np.cos(ang), -np.sin(ang), 0.0],
                   [np.sin(ang), np.cos(ang), 0.0],
                   [0.0, 0.0, 1.0]])

# LiDAR-frame ground truth: center xyz, extents (heading, lateral, vertical), yaw
GT = [
    ((5.0, 1.0, -0.8), (3.9, 1.6, 1.5), 0.30),
    ((5.3, 1.1, -0.8), (3.9, 1.6, 1.5), 0.35),
    ((5.6, 1.25, -0.75), (3.9, 1.6, 1.5), 0.40),
]


def velo_to_rect(p):
    return R_RECT @ (R0 @ np.asarray(p) + T0)


def surface_points(center, size, yaw, n_per_face, rng):
    hw, hl, hh = size[0] / 2, size[1] / 2, size[2] / 2
    pts = []
    for face in range(6):
        a = rng.uniform(-1, 1, n_per_face)
        b = rng.uniform(-1, 1, n_per_face)
        if face == 0:
            pts.append(np.stack([np.full(n_per_face, hw), a * hl, b * hh], 1))
        elif face == 1:
            pts.append(np.stack([np.full(n_per_face, -hw), a * hl, b * hh], 1))
        elif face == 2:
            pts.append(np.stack([a * hw, np.full(n_per_face, hl), b * hh], 1))
        elif face == 3:
            pts.append(np.stack([a * hw, np.full(n_per_face, -hl), b * hh], 1))
        elif face == 4:
            pts.append(np.stack([a * hw, b * hl, np.full(n_per_face, hh)], 1))
        else:
            pts.append(np.stack([a * hw, b * hl, np.full(n_per_face, -hh)], 1))
    local = np.concatenate(pts)
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    return local @ rot.T + np.asarray(center)


def main():
    os.makedirs(os.path.join(OUT, "velodyne", "0000"), exist_ok=True)
    os.makedirs(os.path.join(OUT, "label_02"), exist_ok=True)
    os.makedirs(os.path.join(OUT, "calib"), exist_ok=True)

    with open(os.path.join(OUT, "calib", "0000.txt"), "w") as f:
        f.write("P0: " + " ".join(["0"] * 12) + "\n")
        f.write("R_rect " + " ".join(f"{v:.12e}" for v in R_RECT.ravel()) + "\n")
        tr = np.hstack([R0, T0[:, None]])
        f.write("Tr_velo_cam " + " ".join(f"{v:.12e}" for v in tr.ravel()) + "\n")

    rng = np.random.default_rng(20240811)
    label_lines = []
    for frame, (center, size, yaw) in enumerate(GT):
        pts = surface_points(center, size, yaw, 60, rng)
        clutter = rng.uniform([-2, -6, -2], [12, 8, 1], size=(150, 3))
        cloud = np.concatenate([pts, clutter]).astype(np.float32)
        with open(os.path.join(OUT, "velodyne", "0000", f"{frame:06d}.bin"),
                  "wb") as f:
            for p in cloud:
                f.write(struct.pack("<ffff", p[0], p[1], p[2], 0.0))

        center_rect = velo_to_rect(center)
        loc = center_rect + np.array([0.0, size[2] / 2, 0.0])  # bottom center
        rot_y = -yaw - np.pi / 2
        rot_y = np.arctan2(np.sin(rot_y), np.cos(rot_y))
        # frame track type trunc occ alpha bbox(4) h w l x y z rot_y
        label_lines.append(
            f"{frame} 0 Car 0 0 0.0 0.0 0.0 50.0 50.0 "
            f"{size[2]:.6f} {size[1]:.6f} {size[0]:.6f} "
            f"{loc[0]:.12f} {loc[1]:.12f} {loc[2]:.12f} {rot_y:.12f}")
    # one ignored row to exercise DontCare handling
    label_lines.append("2 -1 DontCare -1 -1 -10.0 0 0 0 0 -1 -1 -1 -1000 -1000 -1000 -10")
    with open(os.path.join(OUT, "label_02", "0000.txt"), "w") as f:
        f.write("\n".join(label_lines) + "\n")

    print("expected LiDAR boxes (cx cy cz w l h yaw):")
    for center, size, yaw in GT:
        print("  ", center, size, yaw)


if __name__ == "__main__":
    main()
