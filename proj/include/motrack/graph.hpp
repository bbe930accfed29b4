#pragma once

#include <array>
#include <functional>
#include <vector>

#include "motrack/tensor.hpp"

namespace motrack {

// Handle to a node in a Graph tape.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in execution order, which is a
// topological order by construction; backward walks the tape once in reverse.
// One Graph serves one forward/backward pass and is single-threaded.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Value leaf(Tensor t, bool requires_grad = false);

  const Tensor& val(Value v) const { return node(v.id).val; }
  // Gradient of the last backward() w.r.t. v. Zero-shaped until backward ran.
  const Tensor& grad(Value v) const { return node(v.id).grad; }
  bool requires_grad(Value v) const { return node(v.id).requires_grad; }

  std::size_t size() const { return nodes_.size(); }

  // Accumulates gradients for every requires-grad node reachable from loss.
  // Throws NonScalarLoss unless loss has exactly one element.
  void backward(Value loss);

  // --- dense ops ------------------------------------------------------
  // 3x3 kernel, padding 1, stride 1 or 2. x: [N,C,H,W], w: [O,C,3,3], b: [O].
  Value conv2d(Value x, Value w, Value b, int stride = 1);
  // x: [..., D], w: [D, E], b: [E] -> [..., E]
  Value linear(Value x, Value w, Value b);
  Value relu(Value x);
  Value add(Value a, Value b);
  // [N,C1,H,W] + [N,C2,H,W] -> [N,C1+C2,H,W]
  Value concat_channels(Value a, Value b);
  // Learned stride-2 3x3 convolution; halves H/W, sets channels to w's O.
  Value downsample2x(Value x, Value w, Value b) { return conv2d(x, w, b, 2); }
  // [N,C,H,W] -> [N,C]; gradient goes to the first maximal element in scan
  // order.
  Value global_max_pool(Value x);
  Value slice_last(Value x, int start, int len);
  Value sum_all(Value x);
  Value scale(Value x, double c);
  // Laplace negative log-likelihood with learned per-DOF scale:
  //   sum_i [ logb_i + |target_i - mu_i| * exp(-logb_i) ] + 4 log 2
  // The fourth residual is an angle and is wrapped to (-pi, pi].
  Value laplace_nll(Value mu, Value logb, const std::array<double, 4>& target);

  // --- extension point (sparse ops live outside this header) -----------
  // Inputs must already be on the tape; the backward fn reads grad_of(self)
  // and accumulates into grad_of(input).
  Value make_node(Tensor value, std::vector<int> inputs,
                  std::function<void(Graph&, int)> backward_fn);
  const std::vector<int>& inputs_of(int id) const {
    return nodes_[static_cast<std::size_t>(id)].inputs;
  }
  Tensor& grad_of(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Tensor& val_of(int id) const {
    return nodes_[static_cast<std::size_t>(id)].val;
  }
  bool node_requires_grad(int id) const {
    return nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    std::vector<int> inputs;
    std::function<void(Graph&, int)> backward_fn;
  };

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
};

}  // namespace motrack
