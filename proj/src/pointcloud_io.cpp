#include "motrack/pointcloud_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "motrack/errors.hpp"

namespace motrack {

namespace {

constexpr double kPi = 3.14159265358979323846;

float read_f32_le(const std::uint8_t* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) |
                    static_cast<std::uint32_t>(p[1]) << 8 |
                    static_cast<std::uint32_t>(p[2]) << 16 |
                    static_cast<std::uint32_t>(p[3]) << 24;
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void write_f32_le(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<std::uint8_t>(u & 0xff));
  out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((u >> 24) & 0xff));
}

struct Mat3 {
  double m[3][3] = {};

  Vec3 apply(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }

  Mat3 inverse() const {
    const double a = m[0][0], b = m[0][1], c = m[0][2];
    const double d = m[1][0], e = m[1][1], f = m[1][2];
    const double g = m[2][0], h = m[2][1], i = m[2][2];
    const double det =
        a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
    if (std::abs(det) < 1e-12) throw MalformedFile("singular calib matrix");
    const double inv = 1.0 / det;
    Mat3 r;
    r.m[0][0] = (e * i - f * h) * inv;
    r.m[0][1] = (c * h - b * i) * inv;
    r.m[0][2] = (b * f - c * e) * inv;
    r.m[1][0] = (f * g - d * i) * inv;
    r.m[1][1] = (a * i - c * g) * inv;
    r.m[1][2] = (c * d - a * f) * inv;
    r.m[2][0] = (d * h - e * g) * inv;
    r.m[2][1] = (b * g - a * h) * inv;
    r.m[2][2] = (a * e - b * d) * inv;
    return r;
  }
};

struct Calib {
  Mat3 r_rect;
  Mat3 velo_to_cam_r;
  Vec3 velo_to_cam_t;
};

// Calib lines look like "R_rect 9 floats" or "Tr_velo_cam: 12 floats".
Calib parse_calib(const std::string& calib_text) {
  std::map<std::string, std::vector<double>> entries;
  std::istringstream in(calib_text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (!key.empty() && key.back() == ':') key.pop_back();
    std::vector<double> vals;
    double v;
    while (ls >> v) vals.push_back(v);
    entries[key] = vals;
  }

  auto need = [&](const std::string& key, std::size_t n) {
    auto it = entries.find(key);
    if (it == entries.end() || it->second.size() < n) {
      throw MalformedFile("calib missing key " + key);
    }
    return it->second;
  };

  Calib c;
  const auto rr = need("R_rect", 9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c.r_rect.m[i][j] = rr[3 * i + j];
  const auto tr = need("Tr_velo_cam", 12);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) c.velo_to_cam_r.m[i][j] = tr[4 * i + j];
  }
  c.velo_to_cam_t = {tr[3], tr[7], tr[11]};
  return c;
}

// Rectified-camera point -> LiDAR: X_velo = R^-1 (R_rect^-1 X_rect - t).
Vec3 rect_to_velo(const Calib& c, const Vec3& x_rect) {
  const Vec3 cam = c.r_rect.inverse().apply(x_rect);
  return c.velo_to_cam_r.inverse().apply(cam - c.velo_to_cam_t);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedFile("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Uniform sample on the surface of an axis-aligned box in its own frame.
void sample_box_surface(std::mt19937_64& rng, const Vec3& size,
                        int points_per_face, std::vector<Vec3>& out) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double hw = 0.5 * size.x, hl = 0.5 * size.y, hh = 0.5 * size.z;
  for (int face = 0; face < 6; ++face) {
    for (int i = 0; i < points_per_face; ++i) {
      const double a = u01(rng), b = u01(rng);
      switch (face) {
        case 0: out.push_back({hw, (2 * a - 1) * hl, (2 * b - 1) * hh}); break;
        case 1: out.push_back({-hw, (2 * a - 1) * hl, (2 * b - 1) * hh}); break;
        case 2: out.push_back({(2 * a - 1) * hw, hl, (2 * b - 1) * hh}); break;
        case 3: out.push_back({(2 * a - 1) * hw, -hl, (2 * b - 1) * hh}); break;
        case 4: out.push_back({(2 * a - 1) * hw, (2 * b - 1) * hl, hh}); break;
        default:
          out.push_back({(2 * a - 1) * hw, (2 * b - 1) * hl, -hh});
          break;
      }
    }
  }
}

}  // namespace

PointCloud parse_velodyne(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 16 != 0) {
    throw MalformedFile("velodyne payload length " +
                        std::to_string(bytes.size()) +
                        " not divisible by 16");
  }
  PointCloud pc;
  pc.frame = Frame::World;
  const std::size_t n = bytes.size() / 16;
  pc.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t* rec = bytes.data() + 16 * i;
    const float x = read_f32_le(rec);
    const float y = read_f32_le(rec + 4);
    const float z = read_f32_le(rec + 8);
    const float intensity = read_f32_le(rec + 12);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z) ||
        !std::isfinite(intensity)) {
      throw MalformedFile("non-finite value in velodyne record " +
                          std::to_string(i));
    }
    pc.points.push_back({x, y, z});
  }
  return pc;
}

std::vector<std::uint8_t> serialize_velodyne(const PointCloud& pc) {
  std::vector<std::uint8_t> out;
  out.reserve(pc.size() * 16);
  for (const Vec3& p : pc.points) {
    write_f32_le(out, static_cast<float>(p.x));
    write_f32_le(out, static_cast<float>(p.y));
    write_f32_le(out, static_cast<float>(p.z));
    write_f32_le(out, 0.0f);
  }
  return out;
}

PointCloud load_velodyne(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedFile("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_velodyne(bytes);
}

std::map<int, std::vector<TrackletBox>> parse_tracklets(
    const std::string& label_text, const std::string& calib_text) {
  const Calib calib = parse_calib(calib_text);
  std::map<int, std::vector<TrackletBox>> tracks;

  std::istringstream in(label_text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream ls(line);
    int frame, track_id;
    std::string type;
    if (!(ls >> frame >> track_id >> type)) {
      throw MalformedFile("label line " + std::to_string(lineno) +
                          ": bad header fields");
    }
    double truncated, occluded, alpha, bb_l, bb_t, bb_r, bb_b;
    double h, w, l, x, y, z, rot_y;
    if (!(ls >> truncated >> occluded >> alpha >> bb_l >> bb_t >> bb_r >>
          bb_b >> h >> w >> l >> x >> y >> z >> rot_y)) {
      throw MalformedFile("label line " + std::to_string(lineno) +
                          ": expected 17 fields");
    }
    if (type == "DontCare") continue;

    // Camera-frame bottom center -> geometric center (camera y points down).
    const Vec3 center_rect{x, y - 0.5 * h, z};
    const Vec3 center_velo = rect_to_velo(calib, center_rect);
    // KITTI length runs along the heading, which is the box-frame x axis here.
    TrackletBox tb;
    tb.frame = frame;
    tb.type = type;
    tb.box = Box3D{center_velo.x, center_velo.y, center_velo.z,
                   l,             w,             h,
                   wrap_angle(-rot_y - 0.5 * kPi)};
    tracks[track_id].push_back(tb);
  }
  for (auto& [id, boxes] : tracks) {
    std::sort(boxes.begin(), boxes.end(),
              [](const TrackletBox& a, const TrackletBox& b) {
                return a.frame < b.frame;
              });
  }
  return tracks;
}

PointCloud crop_range(const PointCloud& pc, const CropRange& range) {
  PointCloud out;
  out.frame = pc.frame;
  for (const Vec3& p : pc.points) {
    if (p.x >= range.x.lo && p.x < range.x.hi && p.y >= range.y.lo &&
        p.y < range.y.hi && p.z >= range.z.lo && p.z < range.z.hi) {
      out.points.push_back(p);
    }
  }
  return out;
}

Sequence synth_sequence(const SynthConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> nx(0.0, cfg.motion_sigma.x);
  std::normal_distribution<double> ny(0.0, cfg.motion_sigma.y);
  std::normal_distribution<double> nz(0.0, cfg.motion_sigma.z);
  std::uniform_real_distribution<double> uyaw(-cfg.yaw_rate_range,
                                              cfg.yaw_rate_range);

  Sequence seq;
  seq.id = "synth-" + std::to_string(cfg.seed);
  seq.category = cfg.category;

  Box3D box{0, 0, 0, cfg.box_size.x, cfg.box_size.y, cfg.box_size.z, 0};
  for (int t = 0; t < cfg.frames; ++t) {
    if (t > 0) {
      // sigma 0 must mean exactly zero motion, so skip the draw entirely
      const double dx = cfg.motion_sigma.x > 0 ? nx(rng) : 0.0;
      const double dy = cfg.motion_sigma.y > 0 ? ny(rng) : 0.0;
      const double dz = cfg.motion_sigma.z > 0 ? nz(rng) : 0.0;
      const double dyaw = cfg.yaw_rate_range > 0 ? uyaw(rng) : 0.0;
      box = Box3D{box.cx + dx, box.cy + dy, box.cz + dz, box.w,
                  box.l,       box.h,       box.yaw + dyaw};
    }
    seq.gt_boxes.push_back(box);

    PointCloud pc;
    pc.frame = Frame::World;
    std::vector<Vec3> local;
    sample_box_surface(rng, cfg.box_size, cfg.points_per_face, local);
    const RigidPose pose = RigidPose::of_box(box);
    for (const Vec3& p : local) pc.points.push_back(pose.apply(p));

    std::uniform_real_distribution<double> cx(box.cx - cfg.clutter_span.x,
                                              box.cx + cfg.clutter_span.x);
    std::uniform_real_distribution<double> cy(box.cy - cfg.clutter_span.y,
                                              box.cy + cfg.clutter_span.y);
    std::uniform_real_distribution<double> cz(box.cz - cfg.clutter_span.z,
                                              box.cz + cfg.clutter_span.z);
    int placed = 0;
    while (placed < cfg.clutter_points) {
      const Vec3 p{cx(rng), cy(rng), cz(rng)};
      if (box_contains(box, p, 0.05)) continue;  // keep clutter off the target
      pc.points.push_back(p);
      ++placed;
    }
    seq.frames.push_back(std::move(pc));
  }
  return seq;
}

void write_sequence(const Sequence& seq, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MalformedFile("cannot write " + path);
  out.precision(17);
  out << "motrack-seq v1\n";
  out << "id " << (seq.id.empty() ? "unnamed" : seq.id) << "\n";
  out << "category " << (seq.category.empty() ? "unknown" : seq.category)
      << "\n";
  out << "frames " << seq.frames.size() << "\n";
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    const Box3D& b = seq.gt_boxes[t];
    out << "frame " << t << "\n";
    out << "box " << b.cx << " " << b.cy << " " << b.cz << " " << b.w << " "
        << b.l << " " << b.h << " " << b.yaw << "\n";
    out << "points " << seq.frames[t].size() << "\n";
    for (const Vec3& p : seq.frames[t].points) {
      out << p.x << " " << p.y << " " << p.z << "\n";
    }
  }
}

Sequence read_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MalformedFile("cannot open " + path);
  std::string magic, version;
  in >> magic >> version;
  if (magic != "motrack-seq" || version != "v1") {
    throw MalformedFile(path + ": not a motrack-seq v1 file");
  }
  Sequence seq;
  std::string key;
  std::size_t frame_count = 0;
  while (in >> key) {
    if (key == "id") {
      in >> seq.id;
    } else if (key == "category") {
      in >> seq.category;
    } else if (key == "frames") {
      in >> frame_count;
    } else if (key == "frame") {
      std::size_t idx;
      in >> idx;
      std::string bkey;
      Box3D b;
      in >> bkey >> b.cx >> b.cy >> b.cz >> b.w >> b.l >> b.h >> b.yaw;
      if (bkey != "box" || !in) throw MalformedFile(path + ": bad frame block");
      std::string pkey;
      std::size_t npoints;
      in >> pkey >> npoints;
      if (pkey != "points" || !in) {
        throw MalformedFile(path + ": bad points header");
      }
      PointCloud pc;
      pc.frame = Frame::World;
      pc.points.resize(npoints);
      for (std::size_t i = 0; i < npoints; ++i) {
        in >> pc.points[i].x >> pc.points[i].y >> pc.points[i].z;
      }
      if (!in) throw MalformedFile(path + ": truncated point list");
      seq.gt_boxes.push_back(b);
      seq.frames.push_back(std::move(pc));
    } else {
      throw MalformedFile(path + ": unexpected token '" + key + "'");
    }
  }
  if (seq.frames.size() != frame_count) {
    throw MalformedFile(path + ": frame count mismatch");
  }
  return seq;
}

std::vector<Sequence> load_kitti_sequences(const std::string& root) {
  namespace fs = std::filesystem;
  const fs::path label_dir = fs::path(root) / "label_02";
  const fs::path calib_dir = fs::path(root) / "calib";
  const fs::path velo_dir = fs::path(root) / "velodyne";
  if (!fs::is_directory(label_dir)) {
    throw MalformedFile(root + ": missing label_02/");
  }

  std::vector<Sequence> out;
  std::vector<fs::path> label_files;
  for (const auto& e : fs::directory_iterator(label_dir)) {
    if (e.path().extension() == ".txt") label_files.push_back(e.path());
  }
  std::sort(label_files.begin(), label_files.end());

  for (const fs::path& label_path : label_files) {
    const std::string stem = label_path.stem().string();
    const std::string label_text = read_text_file(label_path.string());
    const std::string calib_text =
        read_text_file((calib_dir / (stem + ".txt")).string());
    const auto tracks = parse_tracklets(label_text, calib_text);

    // Point clouds are shared across tracks; cache per frame index.
    std::map<int, PointCloud> clouds;
    auto cloud_for = [&](int frame) -> const PointCloud& {
      auto it = clouds.find(frame);
      if (it == clouds.end()) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06d.bin", frame);
        it = clouds
                 .emplace(frame,
                          load_velodyne((velo_dir / stem / name).string()))
                 .first;
      }
      return it->second;
    };

    for (const auto& [track_id, boxes] : tracks) {
      // Split into maximal consecutive-frame runs.
      std::size_t start = 0;
      while (start < boxes.size()) {
        std::size_t end = start + 1;
        while (end < boxes.size() &&
               boxes[end].frame == boxes[end - 1].frame + 1) {
          ++end;
        }
        if (end - start >= 2) {
          Sequence seq;
          seq.id = stem + "-track" + std::to_string(track_id);
          seq.category = boxes[start].type;
          for (std::size_t i = start; i < end; ++i) {
            seq.frames.push_back(cloud_for(boxes[i].frame));
            seq.gt_boxes.push_back(boxes[i].box);
          }
          out.push_back(std::move(seq));
        }
        start = end;
      }
    }
  }
  return out;
}

std::vector<Sequence> load_dataset(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    if (fs::is_directory(fs::path(path) / "label_02")) {
      return load_kitti_sequences(path);
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<Sequence> out;
    for (const auto& f : files) out.push_back(read_sequence(f.string()));
    if (out.empty()) throw EmptyDataset(path + ": no sequence files");
    return out;
  }
  return {read_sequence(path)};
}

}  // namespace motrack
