#include "motrack/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <random>

#include "motrack/geometry.hpp"
#include "motrack/sparseconv.hpp"

namespace motrack {

namespace {

using Builder = std::function<Value(Graph&, const std::vector<Value>&)>;

Tensor rand_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo,
                   double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return t;
}

Tensor rand_nonzero(std::vector<int> shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.5);
  std::bernoulli_distribution sign(0.5);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = (sign(rng) ? 1.0 : -1.0) * u(rng);
  return t;
}

double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({1.0, std::abs(a), std::abs(n)});
}

double check_builder(std::vector<Tensor> inputs, const Builder& build,
                     double eps) {
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
  g.backward(build(g, leaves));

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = g.grad(leaves[k]);
    for (std::size_t i = 0; i < inputs[k].data.size(); ++i) {
      std::vector<Tensor> probe = inputs;
      probe[k].data[i] += eps;
      const double fp = eval(probe);
      probe[k].data[i] -= 2.0 * eps;
      const double fm = eval(probe);
      worst = std::max(worst, rel_err(analytic.data[i], (fp - fm) / (2 * eps)));
    }
  }
  return worst;
}

void random_sparse_input(std::mt19937_64& rng, const std::array<int, 3>& grid,
                         int channels, double density,
                         std::vector<std::array<int, 3>>& coords,
                         Tensor& feats) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  coords.clear();
  for (int z = 0; z < grid[2]; ++z) {
    for (int y = 0; y < grid[1]; ++y) {
      for (int x = 0; x < grid[0]; ++x) {
        if (u01(rng) < density) coords.push_back({x, y, z});
      }
    }
  }
  feats = rand_tensor({static_cast<int>(coords.size()), channels}, rng, -1, 1);
}

}  // namespace

std::vector<GradCheckEntry> gradcheck_ops(std::uint64_t seed, double eps,
                                          double tol) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckEntry> out;
  auto run = [&](const std::string& name, std::vector<Tensor> ins,
                 const Builder& build) {
    GradCheckEntry e;
    e.name = name;
    e.max_rel_err = check_builder(std::move(ins), build, eps);
    e.pass = e.max_rel_err < tol;
    out.push_back(e);
  };

  run("conv2d_s1",
      {rand_tensor({1, 2, 4, 4}, rng, -1, 1), rand_tensor({3, 2, 3, 3}, rng, -1, 1),
       rand_tensor({3}, rng, -1, 1)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.sum_all(g.relu(g.conv2d(v[0], v[1], v[2], 1)));
      });
  run("conv2d_s2",
      {rand_tensor({1, 2, 6, 6}, rng, -1, 1), rand_tensor({2, 2, 3, 3}, rng, -1, 1),
       rand_tensor({2}, rng, -1, 1)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.sum_all(g.relu(g.conv2d(v[0], v[1], v[2], 2)));
      });
  run("linear",
      {rand_tensor({3, 4}, rng, -1, 1), rand_tensor({4, 5}, rng, -1, 1),
       rand_tensor({5}, rng, -1, 1)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.sum_all(g.relu(g.linear(v[0], v[1], v[2])));
      });
  run("relu", {rand_nonzero({3, 5}, rng)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.sum_all(g.relu(v[0]));
      });
  run("add", {rand_tensor({2, 4}, rng, -1, 1), rand_tensor({2, 4}, rng, -1, 1)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.sum_all(g.relu(g.add(v[0], v[1])));
      });
  run("scale", {rand_tensor({2, 4}, rng, -1, 1)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.sum_all(g.scale(v[0], -1.7));
      });
  run("concat_channels",
      {rand_tensor({1, 2, 3, 3}, rng, -1, 1), rand_tensor({1, 3, 3, 3}, rng, -1, 1)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.sum_all(g.relu(g.concat_channels(v[0], g.scale(v[1], 2.0))));
      });
  run("global_max_pool", {rand_tensor({2, 3, 4, 4}, rng, -1, 1)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.sum_all(g.global_max_pool(v[0]));
      });
  run("slice_last", {rand_tensor({2, 6}, rng, -1, 1)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.sum_all(g.scale(g.slice_last(v[0], 1, 4), 1.3));
      });
  run("laplace_nll",
      {rand_nonzero({1, 4}, rng), rand_tensor({1, 4}, rng, -0.5, 0.5)},
      [](Graph& g, const std::vector<Value>& v) {
        return g.laplace_nll(v[0], v[1], {1.9, -1.8, 1.7, -1.6});
      });

  {
    std::vector<std::array<int, 3>> coords;
    Tensor feats;
    random_sparse_input(rng, {6, 6, 6}, 2, 0.15, coords, feats);
    auto sub =
        std::make_shared<KernelMap>(build_submanifold_map(coords, {6, 6, 6}));
    run("submanifold_conv3",
        {feats, rand_tensor({3, 2, 3, 3, 3}, rng, -1, 1), rand_tensor({3}, rng, -1, 1)},
        [sub](Graph& g, const std::vector<Value>& v) {
          return g.sum_all(g.relu(submanifold_conv3(g, v[0], v[1], v[2], sub)));
        });
    auto str =
        std::make_shared<KernelMap>(build_strided_map(coords, {6, 6, 6}));
    run("sparse_conv3_s2",
        {feats, rand_tensor({3, 2, 3, 3, 3}, rng, -1, 1), rand_tensor({3}, rng, -1, 1)},
        [str](Graph& g, const std::vector<Value>& v) {
          return g.sum_all(g.relu(sparse_conv3_s2(g, v[0], v[1], v[2], str)));
        });
    auto shared_coords =
        std::make_shared<std::vector<std::array<int, 3>>>(coords);
    run("flatten_to_bev", {feats},
        [shared_coords](Graph& g, const std::vector<Value>& v) {
          return g.sum_all(
              g.relu(flatten_to_bev(g, v[0], shared_coords, {6, 6, 6})));
        });
  }
  return out;
}

GradCheckEntry gradcheck_model(const ModelConfig& cfg, int entries_per_tensor,
                               std::uint64_t seed, double eps, double tol) {
  std::mt19937_64 rng(seed);

  // A plausible canonical-frame sample: points on a box surface plus clutter.
  auto make_cloud = [&](double shift) {
    PointCloud pc;
    pc.frame = Frame::Canonical;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double hw = 1.0, hl = 0.55, hh = 0.5;
    for (int i = 0; i < 60; ++i) {
      const double a = 2 * u01(rng) - 1, b = 2 * u01(rng) - 1;
      switch (i % 6) {
        case 0: pc.points.push_back({hw + shift, a * hl, b * hh}); break;
        case 1: pc.points.push_back({-hw + shift, a * hl, b * hh}); break;
        case 2: pc.points.push_back({a * hw + shift, hl, b * hh}); break;
        case 3: pc.points.push_back({a * hw + shift, -hl, b * hh}); break;
        case 4: pc.points.push_back({a * hw + shift, b * hl, hh}); break;
        default: pc.points.push_back({a * hw + shift, b * hl, -hh}); break;
      }
    }
    const double span = cfg.voxel.range.x.hi * 0.9;
    std::uniform_real_distribution<double> uc(-span, span);
    for (int i = 0; i < 30; ++i) {
      pc.points.push_back({uc(rng), uc(rng), uc(rng) * 0.25});
    }
    return pc;
  };
  const PointCloud prev = make_cloud(0.0);
  const PointCloud search = make_cloud(0.23);
  const Vec3 size{2.0, 1.1, 1.0};
  const std::array<double, 4> target{0.21, -0.13, 0.05, 0.08};

  MotionNet net(cfg);
  auto eval = [&](const MotionNet& m) {
    Graph g;
    const auto bound = m.bind(g, false);
    const auto out = m.forward_clouds(g, bound, prev, search, size);
    return g.val(g.laplace_nll(out.mu, out.logb, target)).data[0];
  };

  Graph g;
  const auto bound = net.bind(g, true);
  const auto fwd = net.forward_clouds(g, bound, prev, search, size);
  g.backward(g.laplace_nll(fwd.mu, fwd.logb, target));
  const std::vector<Tensor> grads = net.collect_grads(g, bound);

  GradCheckEntry entry;
  entry.name = "model_end_to_end";
  for (std::size_t t = 0; t < grads.size(); ++t) {
    const std::size_t n = net.params().tensors[t].data.size();
    for (int k = 0; k < entries_per_tensor; ++k) {
      const std::size_t i = rng() % n;
      MotionNet probe = net;
      probe.params().tensors[t].data[i] += eps;
      const double fp = eval(probe);
      probe.params().tensors[t].data[i] -= 2.0 * eps;
      const double fm = eval(probe);
      const double numeric = (fp - fm) / (2.0 * eps);
      entry.max_rel_err =
          std::max(entry.max_rel_err, rel_err(grads[t].data[i], numeric));
    }
  }
  entry.pass = entry.max_rel_err < tol;
  return entry;
}

}  // namespace motrack
