#pragma once

#include <array>
#include <memory>
#include <vector>

#include "motrack/graph.hpp"
#include "motrack/voxelizer.hpp"

namespace motrack {

// Per-offset (input row, output row) pair lists for a 3x3x3 kernel.
// Offset index o = ((dz+1)*3 + (dy+1))*3 + (dx+1); the matching kernel tap is
// w[oc][ic][dz+1][dy+1][dx+1]. Convention: out[v] = sum_o W_o * in[v + o].
struct KernelMap {
  struct Pair {
    int in = 0;
    int out = 0;
  };
  std::array<std::vector<Pair>, 27> offsets;
  int stride = 1;
  int n_in = 0;
  int n_out = 0;
  std::vector<std::array<int, 3>> out_coords;
  std::array<int, 3> out_grid{0, 0, 0};
};

// Stride 1: output sites equal the input sites; neighbors outside the active
// set contribute nothing.
KernelMap build_submanifold_map(const std::vector<std::array<int, 3>>& coords,
                                const std::array<int, 3>& grid);

// Stride 2, padding 1: output sites are all half-grid cells reached by at
// least one active input voxel. Requires even grid extents.
KernelMap build_strided_map(const std::vector<std::array<int, 3>>& coords,
                            const std::array<int, 3>& grid);

// Sparse conv ops on the tape. feats: [active, C_in], w: [C_out, C_in, 3,3,3],
// b: [C_out]; result: [map->n_out, C_out]. Gather-GEMM-scatter per offset.
Value sparse_conv3(Graph& g, Value feats, Value w, Value b,
                   std::shared_ptr<const KernelMap> map);

// Stride-1 submanifold convolution; the active set is preserved exactly.
Value submanifold_conv3(Graph& g, Value feats, Value w, Value b,
                        std::shared_ptr<const KernelMap> map);

// Stride-2 sparse convolution onto the half-resolution grid.
Value sparse_conv3_s2(Graph& g, Value feats, Value w, Value b,
                      std::shared_ptr<const KernelMap> map);

// Scatters [active, C] features into a dense [1, C*Z, X, Y] BEV tensor;
// channel block z*C..(z+1)*C at (ix, iy) holds the voxel feature at height z.
Value flatten_to_bev(Graph& g, Value feats,
                     std::shared_ptr<const std::vector<std::array<int, 3>>> coords,
                     const std::array<int, 3>& grid);

}  // namespace motrack
