#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "motrack/graph.hpp"
#include "motrack/sparseconv.hpp"
#include "motrack/tensor.hpp"
#include "motrack/voxelizer.hpp"

namespace motrack {

enum class Architecture { Siamese, Dual, Single };

std::string to_string(Architecture a);
Architecture architecture_from_string(const std::string& s);

struct ModelConfig {
  Architecture arch = Architecture::Siamese;
  // four sparse stages; a stride-2 sparse conv sits between stages (8x total)
  std::vector<int> svfe_widths{16, 32, 64, 128};
  // three dense BEV blocks at strides {1, 2, 4}
  std::vector<int> dbfe_widths{128, 256, 256};
  // motion-feature widths per scale; empty resolves to the concat widths
  std::vector<int> stfa_widths;
  int head_hidden = 0;  // 0 resolves to the motion feature width
  bool use_bfe = true;
  bool relu_before_gmp = false;
  std::uint64_t init_seed = 1;
  VoxelConfig voxel;

  std::vector<int> resolved_stfa_widths() const;
  int motion_dim() const { return resolved_stfa_widths().back(); }
  int resolved_head_hidden() const {
    return head_hidden > 0 ? head_hidden : motion_dim();
  }
};

// CPU-trainable-in-minutes scale used by tests and the synthetic benchmark.
ModelConfig desk_model_config();

// Ordered, named parameter tensors.
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  int add(const std::string& name, Tensor t);
  int size() const { return static_cast<int>(tensors.size()); }
  NamedTensors to_named() const;
  // Every stored parameter must be present in `named` with a matching shape.
  void load_from(const NamedTensors& named);
};

// Channel-wise concatenation of two voxel tensors over the union of their
// active sets, zero-filled where one side is inactive (single-stream input).
SparseVoxelTensor concat_voxel_features(const SparseVoxelTensor& a,
                                        const SparseVoxelTensor& b);

// Multi-scale BEV maps at strides {1, 2, 4}, as tape values.
struct FeaturePyramid {
  std::array<Value, 3> levels;
};

struct SfeOutput {
  FeaturePyramid prev;
  FeaturePyramid search;
  bool fused_single = false;  // single-stream: `prev` holds the only pyramid
};

// The motion regression model: weight-shared (or dual/single) voxel-to-BEV
// encoders, spatio-temporal feature aggregation, box-aware encoding, and the
// 8-way head (4 motion means + 4 log scales).
class MotionNet {
 public:
  explicit MotionNet(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Parameters materialized on a tape, in store order.
  struct Bound {
    std::vector<Value> values;
  };
  Bound bind(Graph& g, bool requires_grad) const;

  struct Output {
    Value mu;    // [1, 4]
    Value logb;  // [1, 4]
  };

  SfeOutput sfe_forward(Graph& g, const Bound& p,
                        const SparseVoxelTensor& prev_vox,
                        const SparseVoxelTensor& search_vox) const;
  // M_out: per-channel global max of the final motion feature, [1, motion_dim].
  Value stfa_forward(Graph& g, const Bound& p, const SfeOutput& sfe) const;
  Output bfe_head(Graph& g, const Bound& p, Value m_out,
                  const Vec3& template_size) const;

  Output forward(Graph& g, const Bound& p, const SparseVoxelTensor& prev_vox,
                 const SparseVoxelTensor& search_vox,
                 const Vec3& template_size) const;
  // Voxelizes canonical-frame clouds, then forward().
  Output forward_clouds(Graph& g, const Bound& p, const PointCloud& prev_canon,
                        const PointCloud& search_canon,
                        const Vec3& template_size) const;

  // Gradients for all parameters after backward(), in store order.
  std::vector<Tensor> collect_grads(const Graph& g, const Bound& p) const;

 private:
  struct LayerIdx {
    int w = -1;
    int b = -1;
  };
  struct EncoderIdx {
    std::array<std::array<LayerIdx, 2>, 4> svfe;
    std::array<LayerIdx, 3> svfe_down;
    LayerIdx bev_adapter;
    LayerIdx dbfe_first;                    // stride-1 block
    std::array<LayerIdx, 2> dbfe_down;      // stride-2 entries of blocks 2, 3
    std::array<LayerIdx, 2> dbfe_conv;      // stride-1 convs of blocks 2, 3
  };

  EncoderIdx make_encoder(const std::string& prefix, int in_channels,
                          std::mt19937_64& rng);
  FeaturePyramid encode(Graph& g, const Bound& p, const EncoderIdx& enc,
                        const SparseVoxelTensor& vox) const;
  Value conv_block(Graph& g, const Bound& p, const LayerIdx& idx, Value x,
                   int stride, bool with_relu) const;

  ModelConfig cfg_;
  ParamStore params_;
  EncoderIdx enc_shared_;  // siamese and single
  EncoderIdx enc_search_;  // dual only
  std::array<LayerIdx, 3> stfa_conv_;
  std::array<LayerIdx, 2> stfa_down_;
  LayerIdx bfe_fc1_, bfe_fc2_;
  LayerIdx head_fc1_, head_fc2_, head_fc3_;
};

}  // namespace motrack
