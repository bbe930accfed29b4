#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "motrack/pointcloud.hpp"
#include "motrack/pointcloud_io.hpp"

namespace motrack {

// Metric range plus per-axis voxel size. Grid extents are padded up to
// multiples of 8 so three stride-2 downsamplings keep integer shapes.
struct VoxelConfig {
  CropRange range{{-4.8, 4.8}, {-4.8, 4.8}, {-1.5, 1.5}};
  Vec3 voxel_size{0.15, 0.15, 0.1875};

  std::array<int, 3> grid_shape() const;  // padded (X, Y, Z)
};

// Hash-indexed set of active voxels with per-voxel feature vectors.
struct SparseVoxelTensor {
  std::vector<std::array<int, 3>> coords;  // unique (ix, iy, iz)
  std::vector<double> feats;               // row-major [active][channels]
  int channels = 0;
  std::array<int, 3> grid{0, 0, 0};

  std::unordered_map<std::int64_t, int> index;  // voxel key -> row

  int active() const { return static_cast<int>(coords.size()); }
  std::int64_t key(int ix, int iy, int iz) const {
    return ix + static_cast<std::int64_t>(grid[0]) *
                    (iy + static_cast<std::int64_t>(grid[1]) * iz);
  }
  // Row of a coordinate, or -1 when inactive.
  int row_of(int ix, int iy, int iz) const {
    auto it = index.find(key(ix, iy, iz));
    return it == index.end() ? -1 : it->second;
  }
  double* feat(int row) { return feats.data() + static_cast<std::size_t>(row) * channels; }
  const double* feat(int row) const {
    return feats.data() + static_cast<std::size_t>(row) * channels;
  }
  void rebuild_index();
};

// Mean-coordinate voxelization (C = 3). Points outside the range are ignored;
// the result is invariant to input point order.
SparseVoxelTensor voxelize(const PointCloud& pc, const VoxelConfig& cfg);

}  // namespace motrack
