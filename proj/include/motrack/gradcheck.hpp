#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motrack/network.hpp"

namespace motrack {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Central-difference check of every differentiable op, all input entries.
// Relative error is |a - n| / max(1, |a|, |n|).
std::vector<GradCheckEntry> gradcheck_ops(std::uint64_t seed = 17,
                                          double eps = 1e-5, double tol = 1e-4);

// End-to-end check for a MotionNet: loss gradients w.r.t. a random sample of
// entries in every parameter tensor.
GradCheckEntry gradcheck_model(const ModelConfig& cfg,
                               int entries_per_tensor = 3,
                               std::uint64_t seed = 17, double eps = 1e-5,
                               double tol = 1e-3);

}  // namespace motrack
