#pragma once

// Test-only reference implementations. These stay independent of the library
// code paths they are used to check.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "motrack/geometry.hpp"
#include "motrack/graph.hpp"

namespace motrack::testing {

// Point-in-rotated-rectangle test in the BEV plane.
inline bool bev_contains(const Box3D& b, double x, double y) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.cx, dy = y - b.cy;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.w && std::abs(ly) <= 0.5 * b.l;
}

struct MonteCarloArea {
  double area = 0.0;
  double sigma = 0.0;
};

// Estimates the BEV intersection area of two boxes by uniform sampling over
// the axis-aligned bounding rectangle of both footprints.
inline MonteCarloArea mc_bev_intersection(const Box3D& a, const Box3D& b,
                                          std::size_t samples,
                                          std::uint64_t seed) {
  double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
  for (const Box3D* box : {&a, &b}) {
    for (const auto& corner : box_corners(*box)) {
      lo_x = std::min(lo_x, corner.x);
      hi_x = std::max(hi_x, corner.x);
      lo_y = std::min(lo_y, corner.y);
      hi_y = std::max(hi_y, corner.y);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(lo_x, hi_x), uy(lo_y, hi_y);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = ux(rng), y = uy(rng);
    if (bev_contains(a, x, y) && bev_contains(b, x, y)) ++hits;
  }
  const double rect = (hi_x - lo_x) * (hi_y - lo_y);
  const double p = static_cast<double>(hits) / static_cast<double>(samples);
  MonteCarloArea out;
  out.area = p * rect;
  out.sigma = rect * std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
  return out;
}

// Volume IoU oracle built on the Monte Carlo area estimate.
inline MonteCarloArea mc_iou3d(const Box3D& a, const Box3D& b,
                               std::size_t samples, std::uint64_t seed) {
  const MonteCarloArea bev = mc_bev_intersection(a, b, samples, seed);
  const double zlo = std::max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  const double zhi = std::min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double dz = std::max(0.0, zhi - zlo);
  const double inter = bev.area * dz;
  const double uni = a.volume() + b.volume() - inter;
  MonteCarloArea out;
  if (uni <= 0.0) return out;
  out.area = inter / uni;
  // d(iou)/d(inter) = (volA + volB) / uni^2
  out.sigma = bev.sigma * dz * (a.volume() + b.volume()) / (uni * uni);
  return out;
}

inline Box3D random_box(std::mt19937_64& rng, double center_span = 2.0,
                        double min_extent = 0.5, double max_extent = 3.0) {
  std::uniform_real_distribution<double> uc(-center_span, center_span);
  std::uniform_real_distribution<double> ue(min_extent, max_extent);
  std::uniform_real_distribution<double> uyaw(-3.14159265358979323846,
                                              3.14159265358979323846);
  return {uc(rng), uc(rng), uc(rng), ue(rng), ue(rng), ue(rng), uyaw(rng)};
}

// Naive 4-loop cross-correlation, kernel 3, padding 1.
inline Tensor naive_conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                           int stride) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0);
  const int OH = (H - 1) / stride + 1, OW = (W - 1) / stride + 1;
  Tensor out({N, O, OH, OW});
  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < O; ++oc) {
      for (int oh = 0; oh < OH; ++oh) {
        for (int ow = 0; ow < OW; ++ow) {
          double acc = b(oc);
          for (int ic = 0; ic < C; ++ic) {
            for (int kh = 0; kh < 3; ++kh) {
              for (int kw = 0; kw < 3; ++kw) {
                const int ih = oh * stride + kh - 1;
                const int iw = ow * stride + kw - 1;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x.at4(n, ic, ih, iw) * w.at4(oc, ic, kh, kw);
              }
            }
          }
          out.at4(n, oc, oh, ow) = acc;
        }
      }
    }
  }
  return out;
}

inline Tensor naive_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int D = w.dim(0), E = w.dim(1);
  const std::int64_t M = x.numel() / D;
  std::vector<int> oshape = x.shape;
  oshape.back() = E;
  Tensor out(oshape);
  for (std::int64_t m = 0; m < M; ++m) {
    for (int e = 0; e < E; ++e) {
      double acc = b(e);
      for (int d = 0; d < D; ++d) {
        acc += x.data[static_cast<std::size_t>(m * D + d)] * w.at2(d, e);
      }
      out.data[static_cast<std::size_t>(m * E + e)] = acc;
    }
  }
  return out;
}

inline Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return t;
}

// Random values bounded away from zero, for ops with kinks at the origin.
inline Tensor random_tensor_nonzero(std::vector<int> shape,
                                    std::mt19937_64& rng, double min_mag = 0.2,
                                    double max_mag = 1.5) {
  std::uniform_real_distribution<double> u(min_mag, max_mag);
  std::bernoulli_distribution sign(0.5);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = (sign(rng) ? 1.0 : -1.0) * u(rng);
  return t;
}

// Dense 3D grid with layout index = ((z*Y + y)*X + x)*C + c.
struct DenseGrid {
  std::vector<double> data;
  std::array<int, 3> grid{0, 0, 0};
  int channels = 0;

  double& at(int x, int y, int z, int c) {
    return data[static_cast<std::size_t>(
        ((static_cast<std::size_t>(z) * grid[1] + y) * grid[0] + x) * channels +
        c)];
  }
  double at(int x, int y, int z, int c) const {
    return data[static_cast<std::size_t>(
        ((static_cast<std::size_t>(z) * grid[1] + y) * grid[0] + x) * channels +
        c)];
  }
};

inline DenseGrid densify(const std::vector<std::array<int, 3>>& coords,
                         const Tensor& feats, const std::array<int, 3>& grid) {
  DenseGrid d;
  d.grid = grid;
  d.channels = feats.dim(1);
  d.data.assign(static_cast<std::size_t>(grid[0]) * grid[1] * grid[2] *
                    d.channels,
                0.0);
  for (std::size_t r = 0; r < coords.size(); ++r) {
    for (int c = 0; c < d.channels; ++c) {
      d.at(coords[r][0], coords[r][1], coords[r][2], c) =
          feats.at2(static_cast<int>(r), c);
    }
  }
  return d;
}

// Naive dense 3D cross-correlation, kernel 3, padding 1, stride 1 or 2.
// w: [C_out, C_in, 3, 3, 3] with kernel dims ordered (z, y, x).
inline DenseGrid dense_conv3d(const DenseGrid& in, const Tensor& w,
                              const Tensor& b, int stride) {
  const int c_in = in.channels, c_out = w.dim(0);
  DenseGrid out;
  out.grid = {stride == 1 ? in.grid[0] : in.grid[0] / 2,
              stride == 1 ? in.grid[1] : in.grid[1] / 2,
              stride == 1 ? in.grid[2] : in.grid[2] / 2};
  out.channels = c_out;
  out.data.assign(static_cast<std::size_t>(out.grid[0]) * out.grid[1] *
                      out.grid[2] * c_out,
                  0.0);
  for (int z = 0; z < out.grid[2]; ++z) {
    for (int y = 0; y < out.grid[1]; ++y) {
      for (int x = 0; x < out.grid[0]; ++x) {
        for (int oc = 0; oc < c_out; ++oc) {
          double acc = b(oc);
          for (int dz = -1; dz <= 1; ++dz) {
            for (int dy = -1; dy <= 1; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                const int ix = x * stride + dx;
                const int iy = y * stride + dy;
                const int iz = z * stride + dz;
                if (ix < 0 || iy < 0 || iz < 0 || ix >= in.grid[0] ||
                    iy >= in.grid[1] || iz >= in.grid[2]) {
                  continue;
                }
                for (int ic = 0; ic < c_in; ++ic) {
                  const double wv =
                      w.data[(((static_cast<std::size_t>(oc) * c_in + ic) * 3 +
                               (dz + 1)) *
                                  3 +
                              (dy + 1)) *
                                 3 +
                             (dx + 1)];
                  acc += wv * in.at(ix, iy, iz, ic);
                }
              }
            }
          }
          out.at(x, y, z, oc) = acc;
        }
      }
    }
  }
  return out;
}

// Random sparse voxel occupancy with random features.
inline void random_sparse(std::mt19937_64& rng, const std::array<int, 3>& grid,
                          int channels, double density,
                          std::vector<std::array<int, 3>>& coords,
                          Tensor& feats) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> uf(-1.0, 1.0);
  coords.clear();
  for (int z = 0; z < grid[2]; ++z) {
    for (int y = 0; y < grid[1]; ++y) {
      for (int x = 0; x < grid[0]; ++x) {
        if (u01(rng) < density) coords.push_back({x, y, z});
      }
    }
  }
  feats = Tensor({static_cast<int>(coords.size()), channels});
  for (double& v : feats.data) v = uf(rng);
}

// Central-difference gradient check. `build` maps leaves to a scalar loss
// through a fresh Graph; every element of every input is perturbed. Relative
// error is |a - n| / max(1, |a|, |n|).
using LossBuilder = std::function<Value(Graph&, const std::vector<Value>&)>;

inline double fd_max_rel_err(std::vector<Tensor> inputs,
                             const LossBuilder& build, double eps = 1e-5) {
  auto eval = [&](const std::vector<Tensor>& ins) {
    Graph g;
    std::vector<Value> leaves;
    leaves.reserve(ins.size());
    for (const Tensor& t : ins) leaves.push_back(g.leaf(t, false));
    return g.val(build(g, leaves)).data[0];
  };

  Graph g;
  std::vector<Value> leaves;
  for (const Tensor& t : inputs) leaves.push_back(g.leaf(t, true));
  const Value loss = build(g, leaves);
  g.backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = g.grad(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].data.size(); ++i) {
      std::vector<Tensor> probe = inputs;
      probe[k].data[i] += eps;
      const double fp = eval(probe);
      probe[k].data[i] -= 2.0 * eps;
      const double fm = eval(probe);
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic.data[i];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace motrack::testing
