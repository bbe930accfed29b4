#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "motrack/geometry.hpp"
#include "motrack/pointcloud.hpp"

namespace motrack {

// Ordered frames with one ground-truth box per frame.
struct Sequence {
  std::string id;
  std::string category;
  std::vector<PointCloud> frames;  // world frame
  std::vector<Box3D> gt_boxes;

  std::size_t length() const { return frames.size(); }
};

struct AxisRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct CropRange {
  AxisRange x, y, z;
};

// Desk-scale stand-in for a real dataset: a box-shaped target whose pose
// follows a random walk, surface-sampled each frame plus uniform clutter.
struct SynthConfig {
  int frames = 30;
  int points_per_face = 40;
  Vec3 motion_sigma{0.3, 0.2, 0.1};  // per-step translation noise, meters
  double yaw_rate_range = 0.05;      // per-step yaw uniform in [-r, r], radians
  int clutter_points = 100;
  std::uint64_t seed = 0;
  Vec3 box_size{2.2, 1.1, 1.0};
  Vec3 clutter_span{4.8, 4.8, 1.5};  // clutter region half-extents around the box
  std::string category = "synthetic";
};

// KITTI velodyne payload: little-endian float32 (x, y, z, intensity) records.
// Intensity is discarded. Throws MalformedFile on bad length or non-finite
// values.
PointCloud parse_velodyne(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_velodyne(const PointCloud& pc);
PointCloud load_velodyne(const std::string& path);

struct TrackletBox {
  int frame = 0;
  Box3D box;  // LiDAR frame
  std::string type;
};

// KITTI tracking labels + calib. Boxes arrive in rectified camera coordinates
// (bottom-center origin) and are transformed to LiDAR-frame Box3D with
// yaw = -rotation_y - pi/2 and the center lifted by h/2. "DontCare" rows are
// dropped. Throws MalformedFile on truncated rows or missing calib keys.
std::map<int, std::vector<TrackletBox>> parse_tracklets(
    const std::string& label_text, const std::string& calib_text);

// Keeps points with lo <= coord < hi on every axis; order preserved.
PointCloud crop_range(const PointCloud& pc, const CropRange& range);

Sequence synth_sequence(const SynthConfig& cfg);

// Newline-delimited structured-text sequence dump (see README for the
// format). Deterministic, full float precision.
void write_sequence(const Sequence& seq, const std::string& path);
Sequence read_sequence(const std::string& path);

// KITTI tracking layout: root/velodyne/SSSS/FFFFFF.bin, root/label_02/SSSS.txt,
// root/calib/SSSS.txt. Each track id with >= 2 consecutive frames becomes one
// Sequence.
std::vector<Sequence> load_kitti_sequences(const std::string& root);

// Directory of *.txt sequence dumps, or a KITTI tracking root (detected by a
// label_02/ subdirectory), or a single dump file.
std::vector<Sequence> load_dataset(const std::string& path);

}  // namespace motrack
