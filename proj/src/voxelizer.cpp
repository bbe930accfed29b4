#include "motrack/voxelizer.hpp"

#include <algorithm>
#include <cmath>

namespace motrack {

namespace {

int padded_extent(double lo, double hi, double size) {
  const int raw = static_cast<int>(std::ceil((hi - lo) / size - 1e-9));
  return ((std::max(raw, 1) + 7) / 8) * 8;
}

}  // namespace

std::array<int, 3> VoxelConfig::grid_shape() const {
  return {padded_extent(range.x.lo, range.x.hi, voxel_size.x),
          padded_extent(range.y.lo, range.y.hi, voxel_size.y),
          padded_extent(range.z.lo, range.z.hi, voxel_size.z)};
}

void SparseVoxelTensor::rebuild_index() {
  index.clear();
  index.reserve(coords.size() * 2);
  for (int r = 0; r < active(); ++r) {
    index.emplace(key(coords[r][0], coords[r][1], coords[r][2]), r);
  }
}

SparseVoxelTensor voxelize(const PointCloud& pc, const VoxelConfig& cfg) {
  SparseVoxelTensor out;
  out.channels = 3;
  out.grid = cfg.grid_shape();

  // Bucket points per voxel first; sums run over lexicographically sorted
  // member points, which makes the result independent of input order.
  std::unordered_map<std::int64_t, std::vector<Vec3>> buckets;
  buckets.reserve(pc.size());
  for (const Vec3& p : pc.points) {
    const int ix =
        static_cast<int>(std::floor((p.x - cfg.range.x.lo) / cfg.voxel_size.x));
    const int iy =
        static_cast<int>(std::floor((p.y - cfg.range.y.lo) / cfg.voxel_size.y));
    const int iz =
        static_cast<int>(std::floor((p.z - cfg.range.z.lo) / cfg.voxel_size.z));
    if (ix < 0 || iy < 0 || iz < 0 || ix >= out.grid[0] || iy >= out.grid[1] ||
        iz >= out.grid[2]) {
      continue;
    }
    buckets[out.key(ix, iy, iz)].push_back(p);
  }

  std::vector<std::int64_t> keys;
  keys.reserve(buckets.size());
  for (const auto& [k, _] : buckets) keys.push_back(k);
  std::sort(keys.begin(), keys.end());

  out.coords.reserve(keys.size());
  out.feats.reserve(keys.size() * 3);
  for (const std::int64_t k : keys) {
    auto& members = buckets[k];
    std::sort(members.begin(), members.end(), [](const Vec3& a, const Vec3& b) {
      if (a.x != b.x) return a.x < b.x;
      if (a.y != b.y) return a.y < b.y;
      return a.z < b.z;
    });
    Vec3 sum;
    for (const Vec3& p : members) sum += p;
    const double inv = 1.0 / static_cast<double>(members.size());

    const int ix = static_cast<int>(k % out.grid[0]);
    const int iy = static_cast<int>((k / out.grid[0]) % out.grid[1]);
    const int iz = static_cast<int>(k / (static_cast<std::int64_t>(out.grid[0]) *
                                         out.grid[1]));
    out.coords.push_back({ix, iy, iz});
    out.feats.push_back(sum.x * inv);
    out.feats.push_back(sum.y * inv);
    out.feats.push_back(sum.z * inv);
  }
  out.rebuild_index();
  return out;
}

}  // namespace motrack
