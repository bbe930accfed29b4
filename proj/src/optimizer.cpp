#include "motrack/optimizer.hpp"

#include <cmath>

#include "motrack/errors.hpp"

namespace motrack {

void AdamWState::init(const std::vector<Tensor>& params) {
  m.clear();
  v.clear();
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    m.push_back(Tensor(p.shape));
    v.push_back(Tensor(p.shape));
  }
  step = 0;
}

void adamw_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                AdamWState& state, const AdamWConfig& cfg) {
  if (params.size() != grads.size()) {
    throw ShapeMismatch("adamw_step: parameter/gradient count mismatch");
  }
  if (!state.initialized()) state.init(params);
  if (state.m.size() != params.size()) {
    throw ShapeMismatch("adamw_step: state does not match parameter list");
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) {
      throw ShapeMismatch("adamw_step: gradient shape mismatch at tensor " +
                          std::to_string(i));
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      const double gk = g.data[k];
      m.data[k] = cfg.beta1 * m.data[k] + (1.0 - cfg.beta1) * gk;
      v.data[k] = cfg.beta2 * v.data[k] + (1.0 - cfg.beta2) * gk * gk;
      const double mhat = m.data[k] / bc1;
      const double vhat = v.data[k] / bc2;
      // decoupled decay: applied directly to the parameter, not the gradient
      p.data[k] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                             cfg.weight_decay * p.data[k]);
    }
  }
}

}  // namespace motrack
