#include "motrack/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "motrack/errors.hpp"

namespace motrack {

namespace {

constexpr char kMagic[8] = {'M', 'T', 'R', 'K', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_i64(std::ostream& out, std::int64_t v) {
  const auto u = static_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
  out.write(b, 8);
}

void put_f64(std::ostream& out, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  put_i64(out, static_cast<std::int64_t>(u));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw MalformedFile("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 |
         static_cast<std::uint32_t>(b[3]) << 24;
}

std::int64_t get_i64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw MalformedFile("checkpoint truncated");
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<std::int64_t>(u);
}

double get_f64(std::istream& in) {
  const std::uint64_t u = static_cast<std::uint64_t>(get_i64(in));
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_, double fill) : shape(std::move(shape_)) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  data.assign(n, fill);
}

Tensor uniform_init(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data) v = u(rng);
  return t;
}

Tensor* NamedTensors::find(const std::string& name) {
  for (auto& [n, t] : items) {
    if (n == name) return &t;
  }
  return nullptr;
}

const Tensor* NamedTensors::find(const std::string& name) const {
  for (const auto& [n, t] : items) {
    if (n == name) return &t;
  }
  return nullptr;
}

void NamedTensors::put(const std::string& name, Tensor t) {
  if (Tensor* existing = find(name)) {
    *existing = std::move(t);
  } else {
    items.emplace_back(name, std::move(t));
  }
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MalformedFile("cannot write " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.items.size()));
  for (const auto& [name, t] : tensors.items) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_i64(out, d);
    for (double v : t.data) put_f64(out, v);
  }
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedFile("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw MalformedFile(path + ": not a checkpoint file");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw MalformedFile(path + ": unsupported checkpoint version " +
                        std::to_string(version));
  }
  const std::uint32_t count = get_u32(in);
  NamedTensors out;
  out.items.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw MalformedFile(path + ": truncated record name");
    const std::uint32_t ndim = get_u32(in);
    std::vector<int> shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape[d] = static_cast<int>(get_i64(in));
    }
    Tensor t(shape);
    for (double& v : t.data) v = get_f64(in);
    out.items.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

}  // namespace motrack
