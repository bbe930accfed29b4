#pragma once

#include <cstdint>
#include <vector>

#include "motrack/tensor.hpp"

namespace motrack {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates, parallel to the parameter list.
struct AdamWState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;

  void init(const std::vector<Tensor>& params);
  bool initialized() const { return !m.empty(); }
};

// One decoupled-weight-decay update with bias-corrected moments. Grads must
// be shaped exactly like params (ShapeMismatch otherwise).
void adamw_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                AdamWState& state, const AdamWConfig& cfg);

}  // namespace motrack
