#include "motrack/network.hpp"

#include <algorithm>
#include <stdexcept>

#include "motrack/errors.hpp"

namespace motrack {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::Siamese: return "siamese";
    case Architecture::Dual: return "dual";
    case Architecture::Single: return "single";
  }
  return "siamese";
}

Architecture architecture_from_string(const std::string& s) {
  if (s == "siamese") return Architecture::Siamese;
  if (s == "dual") return Architecture::Dual;
  if (s == "single") return Architecture::Single;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

std::vector<int> ModelConfig::resolved_stfa_widths() const {
  if (!stfa_widths.empty()) return stfa_widths;
  std::vector<int> out;
  out.reserve(dbfe_widths.size());
  for (int w : dbfe_widths) out.push_back(2 * w);
  return out;
}

ModelConfig desk_model_config() {
  ModelConfig cfg;
  cfg.svfe_widths = {4, 8, 8, 16};
  cfg.dbfe_widths = {16, 32, 32};
  cfg.voxel.range = {{-4.8, 4.8}, {-4.8, 4.8}, {-1.5, 1.5}};
  cfg.voxel.voxel_size = {0.15, 0.15, 0.1875};  // 64 x 64 x 16 grid
  return cfg;
}

int ParamStore::add(const std::string& name, Tensor t) {
  names.push_back(name);
  tensors.push_back(std::move(t));
  return static_cast<int>(tensors.size()) - 1;
}

NamedTensors ParamStore::to_named() const {
  NamedTensors out;
  out.items.reserve(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    out.items.emplace_back(names[i], tensors[i]);
  }
  return out;
}

void ParamStore::load_from(const NamedTensors& named) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Tensor* t = named.find(names[i]);
    if (t == nullptr) {
      throw MalformedFile("checkpoint is missing parameter " + names[i]);
    }
    if (t->shape != tensors[i].shape) {
      throw ShapeMismatch("checkpoint shape mismatch for " + names[i]);
    }
    tensors[i] = *t;
  }
}

SparseVoxelTensor concat_voxel_features(const SparseVoxelTensor& a,
                                        const SparseVoxelTensor& b) {
  if (a.grid != b.grid) {
    throw ShapeMismatch("concat_voxel_features: grid mismatch");
  }
  SparseVoxelTensor out;
  out.grid = a.grid;
  out.channels = a.channels + b.channels;

  std::vector<std::int64_t> keys;
  keys.reserve(a.coords.size() + b.coords.size());
  for (const auto& c : a.coords) keys.push_back(a.key(c[0], c[1], c[2]));
  for (const auto& c : b.coords) keys.push_back(b.key(c[0], c[1], c[2]));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  out.coords.reserve(keys.size());
  out.feats.assign(keys.size() * static_cast<std::size_t>(out.channels), 0.0);
  for (std::size_t r = 0; r < keys.size(); ++r) {
    const std::int64_t k = keys[r];
    const int ix = static_cast<int>(k % out.grid[0]);
    const int iy = static_cast<int>((k / out.grid[0]) % out.grid[1]);
    const int iz = static_cast<int>(
        k / (static_cast<std::int64_t>(out.grid[0]) * out.grid[1]));
    out.coords.push_back({ix, iy, iz});
    double* row = out.feats.data() + r * static_cast<std::size_t>(out.channels);
    if (const int ra = a.row_of(ix, iy, iz); ra >= 0) {
      std::copy_n(a.feat(ra), a.channels, row);
    }
    if (const int rb = b.row_of(ix, iy, iz); rb >= 0) {
      std::copy_n(b.feat(rb), b.channels, row + a.channels);
    }
  }
  out.rebuild_index();
  return out;
}

MotionNet::MotionNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.svfe_widths.size() != 4) {
    throw ShapeMismatch("svfe_widths must have 4 stages");
  }
  if (cfg_.dbfe_widths.size() != 3) {
    throw ShapeMismatch("dbfe_widths must have 3 blocks");
  }
  if (cfg_.resolved_stfa_widths().size() != 3) {
    throw ShapeMismatch("stfa_widths must have 3 scales");
  }
  const auto grid = cfg_.voxel.grid_shape();
  for (int d : grid) {
    if (d % 8 != 0) throw ShapeMismatch("voxel grid must be divisible by 8");
  }

  std::mt19937_64 rng(cfg_.init_seed);
  const int in_ch = cfg_.arch == Architecture::Single ? 6 : 3;
  enc_shared_ = make_encoder(
      cfg_.arch == Architecture::Dual ? "enc_t." : "enc.", in_ch, rng);
  if (cfg_.arch == Architecture::Dual) {
    enc_search_ = make_encoder("enc_s.", in_ch, rng);
  }

  const auto stfa = cfg_.resolved_stfa_widths();
  const auto& dbfe = cfg_.dbfe_widths;
  auto fuse_width = [&](int level) {
    return cfg_.arch == Architecture::Single ? dbfe[static_cast<std::size_t>(level)]
                                             : 2 * dbfe[static_cast<std::size_t>(level)];
  };
  auto conv_param = [&](const std::string& name, int c_in, int c_out) {
    LayerIdx idx;
    idx.w = params_.add(name + ".w", uniform_init({c_out, c_in, 3, 3},
                                                  c_in * 9, rng));
    idx.b = params_.add(name + ".b", uniform_init({c_out}, c_in * 9, rng));
    return idx;
  };
  auto linear_param = [&](const std::string& name, int d, int e) {
    LayerIdx idx;
    idx.w = params_.add(name + ".w", uniform_init({d, e}, d, rng));
    idx.b = params_.add(name + ".b", uniform_init({e}, d, rng));
    return idx;
  };

  stfa_conv_[0] = conv_param("stfa.conv1", fuse_width(0), stfa[0]);
  stfa_down_[0] = conv_param("stfa.down1", stfa[0], fuse_width(1));
  stfa_conv_[1] = conv_param("stfa.conv2", fuse_width(1), stfa[1]);
  stfa_down_[1] = conv_param("stfa.down2", stfa[1], fuse_width(2));
  stfa_conv_[2] = conv_param("stfa.conv3", fuse_width(2), stfa[2]);

  const int m = cfg_.motion_dim();
  if (cfg_.use_bfe) {
    bfe_fc1_ = linear_param("bfe.fc1", 3, m);
    bfe_fc2_ = linear_param("bfe.fc2", m, m);
  }
  const int hh = cfg_.resolved_head_hidden();
  head_fc1_ = linear_param("head.fc1", m, hh);
  head_fc2_ = linear_param("head.fc2", hh, hh);
  head_fc3_ = linear_param("head.fc3", hh, 8);
}

MotionNet::EncoderIdx MotionNet::make_encoder(const std::string& prefix,
                                              int in_channels,
                                              std::mt19937_64& rng) {
  EncoderIdx enc;
  auto sparse_param = [&](const std::string& name, int c_in, int c_out) {
    LayerIdx idx;
    idx.w = params_.add(name + ".w",
                        uniform_init({c_out, c_in, 3, 3, 3}, c_in * 27, rng));
    idx.b = params_.add(name + ".b", uniform_init({c_out}, c_in * 27, rng));
    return idx;
  };
  auto conv_param = [&](const std::string& name, int c_in, int c_out) {
    LayerIdx idx;
    idx.w = params_.add(name + ".w",
                        uniform_init({c_out, c_in, 3, 3}, c_in * 9, rng));
    idx.b = params_.add(name + ".b", uniform_init({c_out}, c_in * 9, rng));
    return idx;
  };

  const auto& sv = cfg_.svfe_widths;
  int ch = in_channels;
  for (int stage = 0; stage < 4; ++stage) {
    const int width = sv[static_cast<std::size_t>(stage)];
    for (int k = 0; k < 2; ++k) {
      enc.svfe[static_cast<std::size_t>(stage)][static_cast<std::size_t>(k)] =
          sparse_param(prefix + "svfe" + std::to_string(stage) + ".conv" +
                           std::to_string(k),
                       ch, width);
      ch = width;
    }
    if (stage < 3) {
      const int next = sv[static_cast<std::size_t>(stage + 1)];
      enc.svfe_down[static_cast<std::size_t>(stage)] =
          sparse_param(prefix + "down" + std::to_string(stage), ch, next);
      ch = next;
    }
  }

  const auto grid = cfg_.voxel.grid_shape();
  const int bev_channels = cfg_.svfe_widths[3] * (grid[2] / 8);
  const auto& db = cfg_.dbfe_widths;
  enc.bev_adapter = conv_param(prefix + "bev_adapter", bev_channels, db[0]);
  enc.dbfe_first = conv_param(prefix + "dbfe0.conv", db[0], db[0]);
  for (int blk = 0; blk < 2; ++blk) {
    enc.dbfe_down[static_cast<std::size_t>(blk)] = conv_param(
        prefix + "dbfe" + std::to_string(blk + 1) + ".down",
        db[static_cast<std::size_t>(blk)], db[static_cast<std::size_t>(blk + 1)]);
    enc.dbfe_conv[static_cast<std::size_t>(blk)] = conv_param(
        prefix + "dbfe" + std::to_string(blk + 1) + ".conv",
        db[static_cast<std::size_t>(blk + 1)],
        db[static_cast<std::size_t>(blk + 1)]);
  }
  return enc;
}

MotionNet::Bound MotionNet::bind(Graph& g, bool requires_grad) const {
  Bound b;
  b.values.reserve(params_.tensors.size());
  for (const Tensor& t : params_.tensors) {
    b.values.push_back(g.leaf(t, requires_grad));
  }
  return b;
}

Value MotionNet::conv_block(Graph& g, const Bound& p, const LayerIdx& idx,
                            Value x, int stride, bool with_relu) const {
  Value out = g.conv2d(x, p.values[static_cast<std::size_t>(idx.w)],
                       p.values[static_cast<std::size_t>(idx.b)], stride);
  return with_relu ? g.relu(out) : out;
}

FeaturePyramid MotionNet::encode(Graph& g, const Bound& p,
                                 const EncoderIdx& enc,
                                 const SparseVoxelTensor& vox) const {
  Tensor feats(
      {vox.active(), vox.channels});
  feats.data = vox.feats;
  Value f = g.leaf(std::move(feats), false);

  std::vector<std::array<int, 3>> coords = vox.coords;
  std::array<int, 3> grid = vox.grid;
  for (int stage = 0; stage < 4; ++stage) {
    auto km = std::make_shared<KernelMap>(build_submanifold_map(coords, grid));
    for (int k = 0; k < 2; ++k) {
      const LayerIdx& idx =
          enc.svfe[static_cast<std::size_t>(stage)][static_cast<std::size_t>(k)];
      f = g.relu(submanifold_conv3(g, f,
                                   p.values[static_cast<std::size_t>(idx.w)],
                                   p.values[static_cast<std::size_t>(idx.b)],
                                   km));
    }
    if (stage < 3) {
      auto ks = std::make_shared<KernelMap>(build_strided_map(coords, grid));
      const LayerIdx& idx = enc.svfe_down[static_cast<std::size_t>(stage)];
      f = g.relu(sparse_conv3_s2(g, f,
                                 p.values[static_cast<std::size_t>(idx.w)],
                                 p.values[static_cast<std::size_t>(idx.b)],
                                 ks));
      coords = ks->out_coords;
      grid = ks->out_grid;
    }
  }

  Value bev = flatten_to_bev(
      g, f, std::make_shared<std::vector<std::array<int, 3>>>(coords), grid);
  bev = conv_block(g, p, enc.bev_adapter, bev, 1, true);

  FeaturePyramid pyr;
  pyr.levels[0] = conv_block(g, p, enc.dbfe_first, bev, 1, true);
  Value x = pyr.levels[0];
  for (int blk = 0; blk < 2; ++blk) {
    x = conv_block(g, p, enc.dbfe_down[static_cast<std::size_t>(blk)], x, 2,
                   true);
    x = conv_block(g, p, enc.dbfe_conv[static_cast<std::size_t>(blk)], x, 1,
                   true);
    pyr.levels[static_cast<std::size_t>(blk + 1)] = x;
  }
  return pyr;
}

SfeOutput MotionNet::sfe_forward(Graph& g, const Bound& p,
                                 const SparseVoxelTensor& prev_vox,
                                 const SparseVoxelTensor& search_vox) const {
  if (prev_vox.grid != search_vox.grid) {
    throw ShapeMismatch("sfe_forward: voxel grids differ");
  }
  SfeOutput out;
  switch (cfg_.arch) {
    case Architecture::Siamese:
      out.prev = encode(g, p, enc_shared_, prev_vox);
      out.search = encode(g, p, enc_shared_, search_vox);
      break;
    case Architecture::Dual:
      out.prev = encode(g, p, enc_shared_, prev_vox);
      out.search = encode(g, p, enc_search_, search_vox);
      break;
    case Architecture::Single: {
      const SparseVoxelTensor fused =
          concat_voxel_features(prev_vox, search_vox);
      out.prev = encode(g, p, enc_shared_, fused);
      out.search = out.prev;
      out.fused_single = true;
      break;
    }
  }
  return out;
}

Value MotionNet::stfa_forward(Graph& g, const Bound& p,
                              const SfeOutput& sfe) const {
  auto fused_level = [&](int i) {
    const auto li = static_cast<std::size_t>(i);
    if (cfg_.arch == Architecture::Single) return sfe.prev.levels[li];
    return g.concat_channels(sfe.prev.levels[li], sfe.search.levels[li]);
  };

  Value m = conv_block(g, p, stfa_conv_[0], fused_level(0), 1, true);
  for (int i = 1; i < 3; ++i) {
    const Value down = conv_block(
        g, p, stfa_down_[static_cast<std::size_t>(i - 1)], m, 2, true);
    const Value summed = g.add(down, fused_level(i));
    const bool last = i == 2;
    m = conv_block(g, p, stfa_conv_[static_cast<std::size_t>(i)], summed, 1,
                   last ? cfg_.relu_before_gmp : true);
  }
  return g.global_max_pool(m);  // [1, motion_dim]
}

MotionNet::Output MotionNet::bfe_head(Graph& g, const Bound& p, Value m_out,
                                      const Vec3& template_size) const {
  Value fused = m_out;
  if (cfg_.use_bfe) {
    Tensor s({1, 3});
    s.data = {template_size.x, template_size.y, template_size.z};
    Value e = g.linear(g.leaf(std::move(s), false),
                       p.values[static_cast<std::size_t>(bfe_fc1_.w)],
                       p.values[static_cast<std::size_t>(bfe_fc1_.b)]);
    e = g.relu(e);
    e = g.linear(e, p.values[static_cast<std::size_t>(bfe_fc2_.w)],
                 p.values[static_cast<std::size_t>(bfe_fc2_.b)]);
    fused = g.add(m_out, e);
  }
  Value h = g.relu(g.linear(fused, p.values[static_cast<std::size_t>(head_fc1_.w)],
                            p.values[static_cast<std::size_t>(head_fc1_.b)]));
  h = g.relu(g.linear(h, p.values[static_cast<std::size_t>(head_fc2_.w)],
                      p.values[static_cast<std::size_t>(head_fc2_.b)]));
  const Value out8 =
      g.linear(h, p.values[static_cast<std::size_t>(head_fc3_.w)],
               p.values[static_cast<std::size_t>(head_fc3_.b)]);
  Output out;
  out.mu = g.slice_last(out8, 0, 4);
  out.logb = g.slice_last(out8, 4, 4);
  return out;
}

MotionNet::Output MotionNet::forward(Graph& g, const Bound& p,
                                     const SparseVoxelTensor& prev_vox,
                                     const SparseVoxelTensor& search_vox,
                                     const Vec3& template_size) const {
  const SfeOutput sfe = sfe_forward(g, p, prev_vox, search_vox);
  const Value m_out = stfa_forward(g, p, sfe);
  return bfe_head(g, p, m_out, template_size);
}

MotionNet::Output MotionNet::forward_clouds(Graph& g, const Bound& p,
                                            const PointCloud& prev_canon,
                                            const PointCloud& search_canon,
                                            const Vec3& template_size) const {
  const SparseVoxelTensor prev_vox = voxelize(prev_canon, cfg_.voxel);
  const SparseVoxelTensor search_vox = voxelize(search_canon, cfg_.voxel);
  return forward(g, p, prev_vox, search_vox, template_size);
}

std::vector<Tensor> MotionNet::collect_grads(const Graph& g,
                                             const Bound& p) const {
  std::vector<Tensor> grads;
  grads.reserve(p.values.size());
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const Tensor& gt = g.grad(p.values[i]);
    if (gt.shape.empty()) {
      grads.push_back(Tensor(params_.tensors[i].shape));
    } else {
      grads.push_back(gt);
    }
  }
  return grads;
}

}  // namespace motrack
