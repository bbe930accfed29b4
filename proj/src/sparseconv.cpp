#include "motrack/sparseconv.hpp"

#include <algorithm>
#include <unordered_map>

#include "motrack/errors.hpp"

namespace motrack {

namespace {

inline std::int64_t voxel_key(const std::array<int, 3>& grid, int ix, int iy,
                              int iz) {
  return ix + static_cast<std::int64_t>(grid[0]) *
                  (iy + static_cast<std::int64_t>(grid[1]) * iz);
}

inline void offset_of(int o, int& dx, int& dy, int& dz) {
  dx = o % 3 - 1;
  dy = (o / 3) % 3 - 1;
  dz = o / 9 - 1;
}

std::unordered_map<std::int64_t, int> build_index(
    const std::vector<std::array<int, 3>>& coords,
    const std::array<int, 3>& grid) {
  std::unordered_map<std::int64_t, int> index;
  index.reserve(coords.size() * 2);
  for (std::size_t r = 0; r < coords.size(); ++r) {
    index.emplace(voxel_key(grid, coords[r][0], coords[r][1], coords[r][2]),
                  static_cast<int>(r));
  }
  return index;
}

}  // namespace

KernelMap build_submanifold_map(const std::vector<std::array<int, 3>>& coords,
                                const std::array<int, 3>& grid) {
  KernelMap km;
  km.n_in = static_cast<int>(coords.size());
  km.n_out = km.n_in;
  km.out_coords = coords;
  km.out_grid = grid;
  const auto index = build_index(coords, grid);
  for (int o = 0; o < 27; ++o) {
    int dx, dy, dz;
    offset_of(o, dx, dy, dz);
    auto& pairs = km.offsets[static_cast<std::size_t>(o)];
    for (std::size_t r = 0; r < coords.size(); ++r) {
      const int nx = coords[r][0] + dx;
      const int ny = coords[r][1] + dy;
      const int nz = coords[r][2] + dz;
      if (nx < 0 || ny < 0 || nz < 0 || nx >= grid[0] || ny >= grid[1] ||
          nz >= grid[2]) {
        continue;
      }
      const auto it = index.find(voxel_key(grid, nx, ny, nz));
      if (it != index.end()) {
        pairs.push_back({it->second, static_cast<int>(r)});
      }
    }
  }
  return km;
}

KernelMap build_strided_map(const std::vector<std::array<int, 3>>& coords,
                            const std::array<int, 3>& grid) {
  if (grid[0] % 2 != 0 || grid[1] % 2 != 0 || grid[2] % 2 != 0) {
    throw ShapeMismatch("strided sparse conv needs even grid extents");
  }
  KernelMap km;
  km.stride = 2;
  km.n_in = static_cast<int>(coords.size());
  km.out_grid = {grid[0] / 2, grid[1] / 2, grid[2] / 2};

  // First pass: collect the reached output sites, canonically ordered by key.
  std::vector<std::int64_t> site_keys;
  for (const auto& c : coords) {
    for (int o = 0; o < 27; ++o) {
      int dx, dy, dz;
      offset_of(o, dx, dy, dz);
      const int px = c[0] - dx, py = c[1] - dy, pz = c[2] - dz;
      if ((px | py | pz) < 0 || px % 2 || py % 2 || pz % 2) continue;
      const int sx = px / 2, sy = py / 2, sz = pz / 2;
      if (sx >= km.out_grid[0] || sy >= km.out_grid[1] || sz >= km.out_grid[2])
        continue;
      site_keys.push_back(voxel_key(km.out_grid, sx, sy, sz));
    }
  }
  std::sort(site_keys.begin(), site_keys.end());
  site_keys.erase(std::unique(site_keys.begin(), site_keys.end()),
                  site_keys.end());

  std::unordered_map<std::int64_t, int> out_index;
  out_index.reserve(site_keys.size() * 2);
  km.out_coords.reserve(site_keys.size());
  for (const std::int64_t k : site_keys) {
    const int sx = static_cast<int>(k % km.out_grid[0]);
    const int sy = static_cast<int>((k / km.out_grid[0]) % km.out_grid[1]);
    const int sz = static_cast<int>(
        k / (static_cast<std::int64_t>(km.out_grid[0]) * km.out_grid[1]));
    out_index.emplace(k, static_cast<int>(km.out_coords.size()));
    km.out_coords.push_back({sx, sy, sz});
  }
  km.n_out = static_cast<int>(km.out_coords.size());

  // Second pass: emit (input, output) pairs per offset.
  for (std::size_t r = 0; r < coords.size(); ++r) {
    const auto& c = coords[r];
    for (int o = 0; o < 27; ++o) {
      int dx, dy, dz;
      offset_of(o, dx, dy, dz);
      const int px = c[0] - dx, py = c[1] - dy, pz = c[2] - dz;
      if ((px | py | pz) < 0 || px % 2 || py % 2 || pz % 2) continue;
      const int sx = px / 2, sy = py / 2, sz = pz / 2;
      if (sx >= km.out_grid[0] || sy >= km.out_grid[1] || sz >= km.out_grid[2])
        continue;
      const int out_row = out_index.at(voxel_key(km.out_grid, sx, sy, sz));
      km.offsets[static_cast<std::size_t>(o)].push_back(
          {static_cast<int>(r), out_row});
    }
  }
  return km;
}

Value sparse_conv3(Graph& g, Value feats, Value w, Value b,
                   std::shared_ptr<const KernelMap> map) {
  const Tensor& x = g.val(feats);
  const Tensor& wt = g.val(w);
  const Tensor& bt = g.val(b);
  if (x.ndim() != 2 || x.dim(0) != map->n_in) {
    throw ShapeMismatch("sparse_conv3: features must be [active, C_in]");
  }
  if (wt.ndim() != 5 || wt.dim(1) != x.dim(1) || wt.dim(2) != 3 ||
      wt.dim(3) != 3 || wt.dim(4) != 3) {
    throw ShapeMismatch("sparse_conv3: weight must be [C_out, C_in, 3,3,3]");
  }
  if (bt.ndim() != 1 || bt.dim(0) != wt.dim(0)) {
    throw ShapeMismatch("sparse_conv3: bias mismatch");
  }
  const int c_in = x.dim(1);
  const int c_out = wt.dim(0);

  Tensor out({map->n_out, c_out});
  for (int r = 0; r < map->n_out; ++r) {
    for (int oc = 0; oc < c_out; ++oc) out.at2(r, oc) = bt(oc);
  }

  // W_o gathered once per offset as a contiguous [C_out, C_in] block.
  std::vector<double> wo(static_cast<std::size_t>(c_out) * c_in);
  for (int o = 0; o < 27; ++o) {
    const auto& pairs = map->offsets[static_cast<std::size_t>(o)];
    if (pairs.empty()) continue;
    const int kz = o / 9, ky = (o / 3) % 3, kx = o % 3;
    for (int oc = 0; oc < c_out; ++oc) {
      for (int ic = 0; ic < c_in; ++ic) {
        wo[static_cast<std::size_t>(oc) * c_in + ic] =
            wt.data[(((static_cast<std::size_t>(oc) * c_in + ic) * 3 + kz) * 3 +
                     ky) *
                        3 +
                    kx];
      }
    }
    for (const KernelMap::Pair& p : pairs) {
      const double* xin = x.data.data() + static_cast<std::size_t>(p.in) * c_in;
      double* orow = out.data.data() + static_cast<std::size_t>(p.out) * c_out;
      for (int oc = 0; oc < c_out; ++oc) {
        const double* wrow = wo.data() + static_cast<std::size_t>(oc) * c_in;
        double acc = 0.0;
        for (int ic = 0; ic < c_in; ++ic) acc += wrow[ic] * xin[ic];
        orow[oc] += acc;
      }
    }
  }

  return g.make_node(
      std::move(out), {feats.id, w.id, b.id},
      [map, c_in, c_out](Graph& gg, int self) {
        const auto& inputs = gg.inputs_of(self);
        const int xid = inputs[0], wid = inputs[1], bid = inputs[2];
        const Tensor& go = gg.grad_of(self);
        const Tensor& x = gg.val_of(xid);
        const Tensor& wt = gg.val_of(wid);
        const bool need_x = gg.node_requires_grad(xid);
        const bool need_w = gg.node_requires_grad(wid);
        const bool need_b = gg.node_requires_grad(bid);

        if (need_b) {
          Tensor& gb = gg.grad_of(bid);
          for (int r = 0; r < map->n_out; ++r) {
            for (int oc = 0; oc < c_out; ++oc) gb(oc) += go.at2(r, oc);
          }
        }

        std::vector<double> wo(static_cast<std::size_t>(c_out) * c_in);
        std::vector<double> gwo(wo.size());
        for (int o = 0; o < 27; ++o) {
          const auto& pairs = map->offsets[static_cast<std::size_t>(o)];
          if (pairs.empty()) continue;
          const int kz = o / 9, ky = (o / 3) % 3, kx = o % 3;
          auto wslot = [&](int oc, int ic) {
            return (((static_cast<std::size_t>(oc) * c_in + ic) * 3 + kz) * 3 +
                    ky) *
                       3 +
                   kx;
          };
          for (int oc = 0; oc < c_out; ++oc) {
            for (int ic = 0; ic < c_in; ++ic) {
              wo[static_cast<std::size_t>(oc) * c_in + ic] =
                  wt.data[wslot(oc, ic)];
            }
          }
          std::fill(gwo.begin(), gwo.end(), 0.0);

          Tensor* gx = need_x ? &gg.grad_of(xid) : nullptr;
          for (const KernelMap::Pair& p : pairs) {
            const double* gout =
                go.data.data() + static_cast<std::size_t>(p.out) * c_out;
            const double* xin =
                x.data.data() + static_cast<std::size_t>(p.in) * c_in;
            double* gxin =
                need_x ? gx->data.data() + static_cast<std::size_t>(p.in) * c_in
                       : nullptr;
            for (int oc = 0; oc < c_out; ++oc) {
              const double gov = gout[oc];
              if (gov == 0.0) continue;
              const double* wrow =
                  wo.data() + static_cast<std::size_t>(oc) * c_in;
              double* gwrow = gwo.data() + static_cast<std::size_t>(oc) * c_in;
              for (int ic = 0; ic < c_in; ++ic) {
                gwrow[ic] += gov * xin[ic];
                if (need_x) gxin[ic] += gov * wrow[ic];
              }
            }
          }
          if (need_w) {
            Tensor& gw = gg.grad_of(wid);
            for (int oc = 0; oc < c_out; ++oc) {
              for (int ic = 0; ic < c_in; ++ic) {
                gw.data[wslot(oc, ic)] +=
                    gwo[static_cast<std::size_t>(oc) * c_in + ic];
              }
            }
          }
        }
      });
}

Value submanifold_conv3(Graph& g, Value feats, Value w, Value b,
                        std::shared_ptr<const KernelMap> map) {
  if (map->stride != 1) {
    throw ShapeMismatch("submanifold_conv3 needs a stride-1 kernel map");
  }
  return sparse_conv3(g, feats, w, b, std::move(map));
}

Value sparse_conv3_s2(Graph& g, Value feats, Value w, Value b,
                      std::shared_ptr<const KernelMap> map) {
  if (map->stride != 2) {
    throw ShapeMismatch("sparse_conv3_s2 needs a stride-2 kernel map");
  }
  return sparse_conv3(g, feats, w, b, std::move(map));
}

Value flatten_to_bev(
    Graph& g, Value feats,
    std::shared_ptr<const std::vector<std::array<int, 3>>> coords,
    const std::array<int, 3>& grid) {
  const Tensor& x = g.val(feats);
  if (x.ndim() != 2 ||
      x.dim(0) != static_cast<int>(coords->size())) {
    throw ShapeMismatch("flatten_to_bev: features must be [active, C]");
  }
  const int c = x.dim(1);
  const int X = grid[0], Y = grid[1], Z = grid[2];

  Tensor out({1, c * Z, X, Y});
  for (std::size_t r = 0; r < coords->size(); ++r) {
    const auto& v = (*coords)[r];
    for (int k = 0; k < c; ++k) {
      out.at4(0, v[2] * c + k, v[0], v[1]) = x.at2(static_cast<int>(r), k);
    }
  }
  return g.make_node(std::move(out), {feats.id},
                     [coords, c](Graph& gg, int self) {
                       const int xid = gg.inputs_of(self)[0];
                       if (!gg.node_requires_grad(xid)) return;
                       const Tensor& go = gg.grad_of(self);
                       Tensor& gx = gg.grad_of(xid);
                       for (std::size_t r = 0; r < coords->size(); ++r) {
                         const auto& v = (*coords)[r];
                         for (int k = 0; k < c; ++k) {
                           gx.at2(static_cast<int>(r), k) +=
                               go.at4(0, v[2] * c + k, v[0], v[1]);
                         }
                       }
                     });
}

}  // namespace motrack
