#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "motrack/errors.hpp"
#include "motrack/gradcheck.hpp"
#include "motrack/network.hpp"
#include "motrack/optimizer.hpp"

using namespace motrack;

namespace {

ModelConfig micro_config() {
  ModelConfig cfg = desk_model_config();
  cfg.svfe_widths = {2, 3, 3, 4};
  cfg.dbfe_widths = {4, 6, 6};
  cfg.voxel.range = {{-1.2, 1.2}, {-1.2, 1.2}, {-0.6, 0.6}};
  cfg.voxel.voxel_size = {0.075, 0.075, 0.15};  // 32 x 32 x 8 grid
  return cfg;
}

PointCloud box_cloud(double shift_x, double shift_y, std::uint64_t seed,
                     double half = 0.45) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half, half);
  PointCloud pc;
  pc.frame = Frame::Canonical;
  for (int i = 0; i < 90; ++i) {
    Vec3 p{u(rng), u(rng), u(rng) * 0.8};
    switch (i % 3) {
      case 0: p.x = (i % 2 ? half : -half); break;
      case 1: p.y = (i % 2 ? half : -half); break;
      default: p.z = (i % 2 ? half : -half) * 0.8; break;
    }
    pc.points.push_back({p.x + shift_x, p.y + shift_y, p.z});
  }
  return pc;
}

}  // namespace

TEST_CASE("concat_voxel_features builds the union with zero fill") {
  VoxelConfig vc;
  vc.range = {{-0.6, 0.6}, {-0.6, 0.6}, {-0.6, 0.6}};
  vc.voxel_size = {0.15, 0.15, 0.15};
  PointCloud a, b;
  a.points = {{0.0, 0.0, 0.0}};
  b.points = {{0.0, 0.0, 0.0}, {0.3, 0.3, 0.3}};
  const auto va = voxelize(a, vc);
  const auto vb = voxelize(b, vc);
  const auto cat = concat_voxel_features(va, vb);
  CHECK(cat.channels == 6);
  REQUIRE(cat.active() == 2);
  // shared voxel carries both features; b-only voxel has zeros in the a block
  const int shared = cat.row_of(va.coords[0][0], va.coords[0][1], va.coords[0][2]);
  REQUIRE(shared >= 0);
  CHECK(cat.feat(shared)[0] == doctest::Approx(0.0));
  CHECK(cat.feat(shared)[3] == doctest::Approx(0.0));
  int only_b = 1 - shared;
  CHECK(cat.feat(only_b)[0] == 0.0);
  CHECK(cat.feat(only_b)[1] == 0.0);
  CHECK(cat.feat(only_b)[2] == 0.0);
  CHECK(cat.feat(only_b)[3] == doctest::Approx(0.3));
}

TEST_CASE("siamese weight sharing: identical inputs give identical pyramids") {
  const ModelConfig cfg = micro_config();
  MotionNet net(cfg);
  const PointCloud pc = box_cloud(0, 0, 5);
  const auto vox = voxelize(pc, cfg.voxel);

  Graph g;
  const auto bound = net.bind(g, false);
  const auto sfe = net.sfe_forward(g, bound, vox, vox);
  for (int lvl = 0; lvl < 3; ++lvl) {
    const auto li = static_cast<std::size_t>(lvl);
    CHECK(g.val(sfe.prev.levels[li]).data == g.val(sfe.search.levels[li]).data);
  }
}

TEST_CASE("dual architecture produces distinct pyramids on identical input") {
  ModelConfig cfg = micro_config();
  cfg.arch = Architecture::Dual;
  MotionNet net(cfg);
  const auto vox = voxelize(box_cloud(0, 0, 5), cfg.voxel);

  Graph g;
  const auto bound = net.bind(g, false);
  const auto sfe = net.sfe_forward(g, bound, vox, vox);
  bool any_differ = false;
  for (int lvl = 0; lvl < 3; ++lvl) {
    const auto li = static_cast<std::size_t>(lvl);
    if (g.val(sfe.prev.levels[li]).data != g.val(sfe.search.levels[li]).data) {
      any_differ = true;
    }
  }
  CHECK(any_differ);
}

TEST_CASE("pyramid shapes for a padded 128x128x24 grid") {
  ModelConfig cfg;
  cfg.svfe_widths = {2, 2, 2, 2};
  cfg.dbfe_widths = {2, 2, 2};
  cfg.voxel.range = {{-4.8, 4.8}, {-4.8, 4.8}, {-1.5, 1.5}};
  cfg.voxel.voxel_size = {0.075, 0.075, 0.125};
  const auto grid = cfg.voxel.grid_shape();
  REQUIRE(grid == std::array<int, 3>{128, 128, 24});

  MotionNet net(cfg);
  PointCloud pc;
  pc.points = {{0.1, 0.1, 0.1}, {-2.0, 1.0, -0.4}, {3.0, -3.0, 1.0}};
  const auto vox = voxelize(pc, cfg.voxel);
  Graph g;
  const auto bound = net.bind(g, false);
  const auto sfe = net.sfe_forward(g, bound, vox, vox);
  CHECK(g.val(sfe.prev.levels[0]).shape == std::vector<int>{1, 2, 16, 16});
  CHECK(g.val(sfe.prev.levels[1]).shape == std::vector<int>{1, 2, 8, 8});
  CHECK(g.val(sfe.prev.levels[2]).shape == std::vector<int>{1, 2, 4, 4});
}

TEST_CASE("siamese has strictly fewer parameter tensors than dual") {
  ModelConfig cfg = micro_config();
  MotionNet siamese(cfg);
  cfg.arch = Architecture::Dual;
  MotionNet dual(cfg);
  CHECK(siamese.params().size() < dual.params().size());
}

TEST_CASE("single architecture runs on fused voxel features") {
  ModelConfig cfg = micro_config();
  cfg.arch = Architecture::Single;
  MotionNet net(cfg);
  const auto prev = voxelize(box_cloud(0, 0, 7), cfg.voxel);
  const auto search = voxelize(box_cloud(0.2, -0.1, 8), cfg.voxel);
  Graph g;
  const auto bound = net.bind(g, false);
  const auto out = net.forward(g, bound, prev, search, {0.9, 0.9, 0.72});
  CHECK(g.val(out.mu).numel() == 4);
  for (double v : g.val(out.mu).data) CHECK(std::isfinite(v));
}

TEST_CASE("all-zero features with zero biases give a zero motion feature") {
  const ModelConfig cfg = micro_config();
  MotionNet net(cfg);
  for (std::size_t i = 0; i < net.params().names.size(); ++i) {
    if (net.params().names[i].ends_with(".b")) {
      std::fill(net.params().tensors[i].data.begin(),
                net.params().tensors[i].data.end(), 0.0);
    }
  }
  const auto empty = voxelize(PointCloud{}, cfg.voxel);
  Graph g;
  const auto bound = net.bind(g, false);
  const auto sfe = net.sfe_forward(g, bound, empty, empty);
  const Value m_out = net.stfa_forward(g, bound, sfe);
  for (double v : g.val(m_out).data) CHECK(v == 0.0);
}

TEST_CASE("swapping the two frames changes the output") {
  const ModelConfig cfg = micro_config();
  MotionNet net(cfg);
  const auto a = voxelize(box_cloud(0, 0, 11), cfg.voxel);
  const auto b = voxelize(box_cloud(0.3, 0.1, 12), cfg.voxel);
  Graph g;
  const auto bound = net.bind(g, false);
  const auto ab = net.forward(g, bound, a, b, {0.9, 0.9, 0.72});
  const auto ba = net.forward(g, bound, b, a, {0.9, 0.9, 0.72});
  CHECK(g.val(ab.mu).data != g.val(ba.mu).data);
}

TEST_CASE("BFE behavior") {
  ModelConfig with_bfe = micro_config();
  MotionNet a(with_bfe);
  ModelConfig without_bfe = micro_config();
  without_bfe.use_bfe = false;
  MotionNet b(without_bfe);
  b.params().load_from(a.params().to_named());  // share everything they both have

  const auto prev = voxelize(box_cloud(0, 0, 21), with_bfe.voxel);
  const auto search = voxelize(box_cloud(0.15, 0.05, 22), with_bfe.voxel);
  const Vec3 size{0.9, 0.9, 0.72};

  Graph ga;
  const auto ba = a.bind(ga, false);
  const auto outa = a.forward(ga, ba, prev, search, size);
  Graph gb;
  const auto bb = b.bind(gb, false);
  const auto outb = b.forward(gb, bb, prev, search, size);
  // enabled vs disabled differ on the same motion feature
  CHECK(ga.val(outa.mu).data != gb.val(outb.mu).data);

  // zero-bias box MLP with S = 0 reduces to the BFE-free head
  MotionNet a0(with_bfe);
  a0.params().load_from(a.params().to_named());
  for (std::size_t i = 0; i < a0.params().names.size(); ++i) {
    const auto& n = a0.params().names[i];
    if (n == "bfe.fc1.b" || n == "bfe.fc2.b") {
      std::fill(a0.params().tensors[i].data.begin(),
                a0.params().tensors[i].data.end(), 0.0);
    }
  }
  Graph g0;
  const auto b0 = a0.bind(g0, false);
  const auto out0 = a0.forward(g0, b0, prev, search, {0, 0, 0});
  for (int i = 0; i < 4; ++i) {
    CHECK(g0.val(out0.mu).data[static_cast<std::size_t>(i)] ==
          doctest::Approx(gb.val(outb.mu).data[static_cast<std::size_t>(i)])
              .epsilon(1e-12));
  }

  // doubling S changes mu
  Graph g2;
  const auto b2 = a.bind(g2, false);
  const auto out2 = a.forward(g2, b2, prev, search,
                              {2 * size.x, 2 * size.y, 2 * size.z});
  CHECK(ga.val(outa.mu).data != g2.val(out2.mu).data);
}

TEST_CASE("forward is deterministic and point-order invariant") {
  const ModelConfig cfg = micro_config();
  MotionNet net(cfg);
  PointCloud prev = box_cloud(0, 0, 31);
  PointCloud search = box_cloud(0.2, 0.0, 32);
  const Vec3 size{0.9, 0.9, 0.72};

  auto run = [&](const PointCloud& a, const PointCloud& c) {
    Graph g;
    const auto bound = net.bind(g, false);
    const auto out = net.forward_clouds(g, bound, a, c, size);
    return std::make_pair(g.val(out.mu).data, g.val(out.logb).data);
  };
  const auto r1 = run(prev, search);
  const auto r2 = run(prev, search);
  CHECK(r1 == r2);

  std::mt19937_64 rng(99);
  std::shuffle(prev.points.begin(), prev.points.end(), rng);
  std::shuffle(search.points.begin(), search.points.end(), rng);
  const auto r3 = run(prev, search);
  CHECK(r1 == r3);
}

TEST_CASE("empty search cloud still yields a finite forward") {
  const ModelConfig cfg = micro_config();
  MotionNet net(cfg);
  Graph g;
  const auto bound = net.bind(g, false);
  const auto out = net.forward_clouds(g, bound, box_cloud(0, 0, 41),
                                      PointCloud{}, {0.9, 0.9, 0.72});
  for (double v : g.val(out.mu).data) CHECK(std::isfinite(v));
  for (double v : g.val(out.logb).data) CHECK(std::isfinite(v));
}

TEST_CASE("50 optimizer steps drive the loss down on one pair") {
  const ModelConfig cfg = micro_config();
  MotionNet net(cfg);
  const PointCloud prev = box_cloud(0, 0, 51);
  const PointCloud search = box_cloud(0.25, -0.15, 51);
  const std::array<double, 4> target{0.25, -0.15, 0.0, 0.0};
  const Vec3 size{0.9, 0.9, 0.72};

  AdamWConfig ocfg;
  ocfg.lr = 3e-3;
  ocfg.weight_decay = 0.0;
  AdamWState state;

  double first = 0.0, last = 0.0;
  for (int step = 0; step < 50; ++step) {
    Graph g;
    const auto bound = net.bind(g, true);
    const auto out = net.forward_clouds(g, bound, prev, search, size);
    const Value loss = g.laplace_nll(out.mu, out.logb, target);
    if (step == 0) first = g.val(loss).data[0];
    last = g.val(loss).data[0];
    g.backward(loss);
    auto grads = net.collect_grads(g, bound);
    adamw_step(net.params().tensors, grads, state, ocfg);
  }
  CHECK(last < first);
}

TEST_CASE("per-op gradient suite passes") {
  for (const auto& e : gradcheck_ops(17)) {
    INFO(e.name, " err=", e.max_rel_err);
    CHECK(e.pass);
  }
}

TEST_CASE("end-to-end gradients match finite differences (micro model)") {
  const auto entry = gradcheck_model(micro_config(), 2, 77);
  INFO("max rel err = ", entry.max_rel_err);
  CHECK(entry.pass);
}
