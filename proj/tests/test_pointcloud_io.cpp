#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>

#include "motrack/errors.hpp"
#include "motrack/pointcloud_io.hpp"

using namespace motrack;

namespace {

std::vector<std::uint8_t> pack_points(
    const std::vector<std::array<float, 4>>& recs) {
  std::vector<std::uint8_t> out;
  for (const auto& r : recs) {
    for (float f : r) {
      std::uint8_t b[4];
      std::memcpy(b, &f, 4);
      out.insert(out.end(), b, b + 4);
    }
  }
  return out;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("parse_velodyne: single record") {
  const auto bytes = pack_points({{1.0f, 2.0f, 3.0f, 0.5f}});
  const PointCloud pc = parse_velodyne(bytes);
  REQUIRE(pc.size() == 1);
  CHECK(pc.points[0].x == doctest::Approx(1.0));
  CHECK(pc.points[0].y == doctest::Approx(2.0));
  CHECK(pc.points[0].z == doctest::Approx(3.0));
}

TEST_CASE("parse_velodyne: empty and malformed") {
  CHECK(parse_velodyne({}).empty());
  std::vector<std::uint8_t> bad(17, 0);
  CHECK_THROWS_AS(parse_velodyne(bad), MalformedFile);
  // non-finite coordinate
  auto nan_bytes = pack_points({{std::nanf(""), 0.0f, 0.0f, 0.0f}});
  CHECK_THROWS_AS(parse_velodyne(nan_bytes), MalformedFile);
}

TEST_CASE("velodyne round-trips bit-exactly") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> u(-50.0f, 50.0f);
  PointCloud pc;
  for (int i = 0; i < 500; ++i) {
    pc.points.push_back({u(rng), u(rng), u(rng)});
  }
  const auto bytes = serialize_velodyne(pc);
  const PointCloud back = parse_velodyne(bytes);
  const auto bytes2 = serialize_velodyne(back);
  CHECK(bytes == bytes2);
}

TEST_CASE("crop_range keeps [lo, hi) per axis and is idempotent") {
  PointCloud pc;
  pc.points = {{5.0, 0, 0}, {0,  0, 0}, {4.7999, 0, 0}, {4.8, 0, 0},
               {-4.8, 0, 0}, {0, 0, 1.49}, {0, 0, 1.5}};
  const CropRange r{{-4.8, 4.8}, {-4.8, 4.8}, {-1.5, 1.5}};
  const PointCloud c = crop_range(pc, r);
  REQUIRE(c.size() == 4);  // (5,..), (4.8,..) and (..,1.5) dropped
  CHECK(c.points[0].x == doctest::Approx(0.0));
  CHECK(c.points[1].x == doctest::Approx(4.7999));
  CHECK(c.points[2].x == doctest::Approx(-4.8));
  const PointCloud c2 = crop_range(c, r);
  CHECK(c2.size() == c.size());
}

TEST_CASE("crop_range keeps interior clouds intact") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud pc;
  for (int i = 0; i < 100; ++i) pc.points.push_back({u(rng), u(rng), u(rng)});
  const CropRange r{{-2, 2}, {-2, 2}, {-2, 2}};
  CHECK(crop_range(pc, r).size() == pc.size());
}

TEST_CASE("parse_tracklets: hand-transformed single row") {
  // Calib: велodyne->cam swaps axes, rectification is a 0.02 rad roll.
  const std::string calib =
      "R_rect 0.99980000666 -0.01999866669 0 0.01999866669 0.99980000666 0 0 "
      "0 1\n"
      "Tr_velo_cam 0 -1 0 0.01 0 0 -1 -0.05 1 0 0 -0.29\n";
  // One Car at rect-camera location (2, 1, 10), h=1.5 w=1.6 l=3.9, rot_y=0.2.
  const std::string label =
      "0 3 Car 0 0 0.0 0 0 50 50 1.5 1.6 3.9 2.0 1.0 10.0 0.2\n";
  const auto tracks = parse_tracklets(label, calib);
  REQUIRE(tracks.size() == 1);
  REQUIRE(tracks.count(3) == 1);
  REQUIRE(tracks.at(3).size() == 1);
  const Box3D b = tracks.at(3)[0].box;

  // Hand evaluation with the documented matrices:
  //   center_rect = (2, 1 - 0.75, 10)
  //   cam = R_rect^T * center_rect   (rectification is orthonormal)
  //   velo = R^T * (cam - t) with R the axis swap above
  const double cr[3] = {2.0, 0.25, 10.0};
  const double c0 = 0.99980000666, s0 = 0.01999866669;
  const double cam[3] = {c0 * cr[0] + s0 * cr[1], -s0 * cr[0] + c0 * cr[1],
                         cr[2]};
  const double d[3] = {cam[0] - 0.01, cam[1] + 0.05, cam[2] + 0.29};
  // R^T rows: velo_x = cam_z, velo_y = -cam_x, velo_z = -cam_y
  const double expect[3] = {d[2], -d[0], -d[1]};
  CHECK(b.cx == doctest::Approx(expect[0]).epsilon(1e-9));
  CHECK(b.cy == doctest::Approx(expect[1]).epsilon(1e-9));
  CHECK(b.cz == doctest::Approx(expect[2]).epsilon(1e-9));
  CHECK(b.w == doctest::Approx(3.9));   // heading extent = KITTI length
  CHECK(b.l == doctest::Approx(1.6));
  CHECK(b.h == doctest::Approx(1.5));
  CHECK(b.yaw == doctest::Approx(wrap_angle(-0.2 - M_PI / 2)).epsilon(1e-12));
}

TEST_CASE("parse_tracklets: DontCare-only and malformed rows") {
  const std::string calib =
      "R_rect 1 0 0 0 1 0 0 0 1\nTr_velo_cam 1 0 0 0 0 1 0 0 0 0 1 0\n";
  const auto tracks = parse_tracklets(
      "0 -1 DontCare -1 -1 -10 0 0 0 0 -1 -1 -1 -1000 -1000 -1000 -10\n",
      calib);
  CHECK(tracks.empty());

  CHECK_THROWS_AS(parse_tracklets("0 1 Car 0 0 0.0 0 0 50 50 1.5\n", calib),
                  MalformedFile);
  CHECK_THROWS_AS(
      parse_tracklets("0 1 Car 0 0 0.0 0 0 50 50 1.5 1.6 3.9 2 1 10 0.2\n",
                      "R_rect 1 0 0 0 1 0 0 0 1\n"),
      MalformedFile);
}

TEST_CASE("synth_sequence: determinism and shape") {
  SynthConfig cfg;
  cfg.frames = 30;
  cfg.seed = 7;
  const Sequence a = synth_sequence(cfg);
  const Sequence b = synth_sequence(cfg);
  REQUIRE(a.length() == 30);
  REQUIRE(a.gt_boxes.size() == 30);
  for (std::size_t t = 0; t < a.length(); ++t) {
    REQUIRE(a.frames[t].size() == b.frames[t].size());
    for (std::size_t i = 0; i < a.frames[t].size(); ++i) {
      CHECK(a.frames[t].points[i].x == b.frames[t].points[i].x);
      CHECK(a.frames[t].points[i].y == b.frames[t].points[i].y);
      CHECK(a.frames[t].points[i].z == b.frames[t].points[i].z);
    }
  }
}

TEST_CASE("synth_sequence: zero motion keeps the first box") {
  SynthConfig cfg;
  cfg.frames = 10;
  cfg.motion_sigma = {0, 0, 0};
  cfg.yaw_rate_range = 0;
  cfg.seed = 3;
  const Sequence seq = synth_sequence(cfg);
  for (const Box3D& b : seq.gt_boxes) {
    CHECK(b.cx == seq.gt_boxes[0].cx);
    CHECK(b.cy == seq.gt_boxes[0].cy);
    CHECK(b.cz == seq.gt_boxes[0].cz);
    CHECK(b.yaw == seq.gt_boxes[0].yaw);
  }
}

TEST_CASE("synth_sequence: surface points stay on the box, clutter stays off") {
  SynthConfig cfg;
  cfg.frames = 5;
  cfg.seed = 11;
  const Sequence seq = synth_sequence(cfg);
  const int surface = 6 * cfg.points_per_face;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const Box3D& box = seq.gt_boxes[t];
    for (int i = 0; i < surface; ++i) {
      CHECK(box_contains(box, seq.frames[t].points[i], 1e-9));
    }
    for (std::size_t i = surface; i < seq.frames[t].size(); ++i) {
      CHECK(!box_contains(box, seq.frames[t].points[i], 0.049));
    }
  }
}

TEST_CASE("sequence dump round-trips") {
  SynthConfig cfg;
  cfg.frames = 4;
  cfg.points_per_face = 5;
  cfg.clutter_points = 7;
  cfg.seed = 21;
  const Sequence seq = synth_sequence(cfg);
  const std::string path = temp_path("motrack_seq_roundtrip.txt");
  write_sequence(seq, path);
  const Sequence back = read_sequence(path);
  REQUIRE(back.length() == seq.length());
  CHECK(back.category == seq.category);
  for (std::size_t t = 0; t < seq.length(); ++t) {
    CHECK(back.gt_boxes[t].cx == seq.gt_boxes[t].cx);
    CHECK(back.gt_boxes[t].yaw == seq.gt_boxes[t].yaw);
    REQUIRE(back.frames[t].size() == seq.frames[t].size());
    for (std::size_t i = 0; i < seq.frames[t].size(); ++i) {
      CHECK(back.frames[t].points[i].x == seq.frames[t].points[i].x);
      CHECK(back.frames[t].points[i].z == seq.frames[t].points[i].z);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("kitti mini fixture loads as one 3-frame sequence") {
  const std::string root = std::string(MOTRACK_TEST_DATA_DIR) + "/kitti_mini";
  const auto seqs = load_kitti_sequences(root);
  REQUIRE(seqs.size() == 1);
  const Sequence& s = seqs[0];
  CHECK(s.category == "Car");
  REQUIRE(s.length() == 3);
  REQUIRE(s.gt_boxes.size() == 3);
  // Frozen from the fixture generator's LiDAR-frame ground truth.
  const double expect[3][7] = {
      {5.0, 1.0, -0.8, 3.9, 1.6, 1.5, 0.30},
      {5.3, 1.1, -0.8, 3.9, 1.6, 1.5, 0.35},
      {5.6, 1.25, -0.75, 3.9, 1.6, 1.5, 0.40},
  };
  for (int t = 0; t < 3; ++t) {
    CHECK(std::abs(s.gt_boxes[t].cx - expect[t][0]) < 1e-6);
    CHECK(std::abs(s.gt_boxes[t].cy - expect[t][1]) < 1e-6);
    CHECK(std::abs(s.gt_boxes[t].cz - expect[t][2]) < 1e-6);
    CHECK(std::abs(s.gt_boxes[t].w - expect[t][3]) < 1e-6);
    CHECK(std::abs(s.gt_boxes[t].l - expect[t][4]) < 1e-6);
    CHECK(std::abs(s.gt_boxes[t].h - expect[t][5]) < 1e-6);
    CHECK(std::abs(wrap_angle(s.gt_boxes[t].yaw - expect[t][6])) < 1e-6);
    CHECK(s.frames[t].size() == 510);  // 6*60 surface + 150 clutter
  }
}
