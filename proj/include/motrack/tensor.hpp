#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace motrack {

// Dense row-major float64 n-d value.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shape_, double fill = 0.0);

  static Tensor scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  double& operator()(int i) { return data[static_cast<std::size_t>(i)]; }
  const double& operator()(int i) const {
    return data[static_cast<std::size_t>(i)];
  }
  double& at2(int i, int j) {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  const double& at2(int i, int j) const {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
  }
  double& at4(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) *
                    shape[3] +
                w];
  }
  const double& at4(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) *
                    shape[3] +
                w];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// Uniform init in +-1/sqrt(fan_in), the default for all learned layers.
Tensor uniform_init(std::vector<int> shape, int fan_in, std::mt19937_64& rng);

// Ordered (name, tensor) records; the checkpoint unit.
struct NamedTensors {
  std::vector<std::pair<std::string, Tensor>> items;

  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  void put(const std::string& name, Tensor t);
};

// Binary checkpoint: magic, version, then (name, shape, little-endian float64
// payload) records. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

}  // namespace motrack
