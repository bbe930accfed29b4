#include "motrack/graph.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "motrack/errors.hpp"
#include "motrack/geometry.hpp"

namespace motrack {

namespace {

constexpr double kLog2 = 0.69314718055994530942;

void check(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

}  // namespace

Value Graph::leaf(Tensor t, bool requires_grad) {
  Node n;
  n.val = std::move(t);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Value Graph::make_node(Tensor value, std::vector<int> inputs,
                       std::function<void(Graph&, int)> backward_fn) {
  const int next = static_cast<int>(nodes_.size());
  bool needs_grad = false;
  for (int in : inputs) {
    if (in < 0 || in >= next) {
      // also rules out cycles: inputs always precede their consumer
      throw std::logic_error("graph input id out of range");
    }
    needs_grad = needs_grad || nodes_[static_cast<std::size_t>(in)].requires_grad;
  }
  Node n;
  n.val = std::move(value);
  n.requires_grad = needs_grad;
  n.inputs = std::move(inputs);
  n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return {next};
}

void Graph::backward(Value loss) {
  Node& root = node(loss.id);
  if (root.val.numel() != 1) {
    throw NonScalarLoss("backward needs a scalar loss, got numel " +
                        std::to_string(root.val.numel()));
  }

  // Mark ancestors of the loss; only they participate.
  std::vector<char> needed(nodes_.size(), 0);
  std::vector<int> stack{loss.id};
  needed[static_cast<std::size_t>(loss.id)] = 1;
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (int in : nodes_[static_cast<std::size_t>(id)].inputs) {
      if (!needed[static_cast<std::size_t>(in)]) {
        needed[static_cast<std::size_t>(in)] = 1;
        stack.push_back(in);
      }
    }
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (needed[i]) nodes_[i].grad = Tensor(nodes_[i].val.shape);
  }
  root.grad.data[0] = 1.0;

  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!needed[static_cast<std::size_t>(id)] || !n.requires_grad) continue;
    if (n.backward_fn) n.backward_fn(*this, id);
  }
}

Value Graph::conv2d(Value xv, Value wv, Value bv, int stride) {
  const Tensor& x = val(xv);
  const Tensor& w = val(wv);
  const Tensor& b = val(bv);
  check(x.ndim() == 4, "conv2d: input must be 4-d");
  check(w.ndim() == 4 && w.dim(2) == 3 && w.dim(3) == 3,
        "conv2d: weight must be [O,C,3,3]");
  check(w.dim(1) == x.dim(1), "conv2d: channel mismatch");
  check(b.ndim() == 1 && b.dim(0) == w.dim(0), "conv2d: bias mismatch");
  check(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");

  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int O = w.dim(0);
  const int OH = (H - 1) / stride + 1;
  const int OW = (W - 1) / stride + 1;

  Tensor out({N, O, OH, OW});
  for (int n = 0; n < N; ++n) {
    for (int oc = 0; oc < O; ++oc) {
      double* oplane = &out.at4(n, oc, 0, 0);
      const double bias = b(oc);
      for (int i = 0; i < OH * OW; ++i) oplane[i] = bias;
      for (int ic = 0; ic < C; ++ic) {
        for (int kh = 0; kh < 3; ++kh) {
          for (int kw = 0; kw < 3; ++kw) {
            const double wvv = w.at4(oc, ic, kh, kw);
            if (wvv == 0.0) continue;
            int ow_lo = 0;
            while (ow_lo < OW && ow_lo * stride + kw - 1 < 0) ++ow_lo;
            int ow_hi = OW;
            while (ow_hi > ow_lo && (ow_hi - 1) * stride + kw - 1 >= W) --ow_hi;
            for (int oh = 0; oh < OH; ++oh) {
              const int ih = oh * stride + kh - 1;
              if (ih < 0 || ih >= H) continue;
              const double* xrow = &x.at4(n, ic, ih, 0);
              double* orow = oplane + static_cast<std::size_t>(oh) * OW;
              const int base = kw - 1;
              for (int ow = ow_lo; ow < ow_hi; ++ow) {
                orow[ow] += wvv * xrow[ow * stride + base];
              }
            }
          }
        }
      }
    }
  }

  return make_node(
      std::move(out), {xv.id, wv.id, bv.id},
      [stride, N, C, H, W, O, OH, OW](Graph& g, int self) {
        const int xid = g.inputs_of(self)[0];
        const int wid = g.inputs_of(self)[1];
        const int bid = g.inputs_of(self)[2];
        const Tensor& go = g.grad_of(self);
        const Tensor& x = g.val_of(xid);
        const Tensor& w = g.val_of(wid);
        const bool need_x = g.node_requires_grad(xid);
        const bool need_w = g.node_requires_grad(wid);
        const bool need_b = g.node_requires_grad(bid);
        Tensor& gx = g.grad_of(xid);
        Tensor& gw = g.grad_of(wid);
        Tensor& gb = g.grad_of(bid);

        for (int n = 0; n < N; ++n) {
          for (int oc = 0; oc < O; ++oc) {
            const double* goplane = &go.at4(n, oc, 0, 0);
            if (need_b) {
              double acc = 0.0;
              for (int i = 0; i < OH * OW; ++i) acc += goplane[i];
              gb(oc) += acc;
            }
            for (int ic = 0; ic < C; ++ic) {
              for (int kh = 0; kh < 3; ++kh) {
                for (int kw = 0; kw < 3; ++kw) {
                  const double wvv = w.at4(oc, ic, kh, kw);
                  double dw_acc = 0.0;
                  int ow_lo = 0;
                  while (ow_lo < OW && ow_lo * stride + kw - 1 < 0) ++ow_lo;
                  int ow_hi = OW;
                  while (ow_hi > ow_lo && (ow_hi - 1) * stride + kw - 1 >= W)
                    --ow_hi;
                  const int base = kw - 1;
                  for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * stride + kh - 1;
                    if (ih < 0 || ih >= H) continue;
                    const double* xrow = &x.at4(n, ic, ih, 0);
                    const double* gorow =
                        goplane + static_cast<std::size_t>(oh) * OW;
                    if (need_x) {
                      double* gxrow = &gx.at4(n, ic, ih, 0);
                      for (int ow = ow_lo; ow < ow_hi; ++ow) {
                        const double gov = gorow[ow];
                        dw_acc += gov * xrow[ow * stride + base];
                        gxrow[ow * stride + base] += wvv * gov;
                      }
                    } else {
                      for (int ow = ow_lo; ow < ow_hi; ++ow) {
                        dw_acc += gorow[ow] * xrow[ow * stride + base];
                      }
                    }
                  }
                  if (need_w) gw.at4(oc, ic, kh, kw) += dw_acc;
                }
              }
            }
          }
        }
      });
}

Value Graph::linear(Value xv, Value wv, Value bv) {
  const Tensor& x = val(xv);
  const Tensor& w = val(wv);
  const Tensor& b = val(bv);
  check(x.ndim() >= 1 && w.ndim() == 2, "linear: bad ranks");
  const int D = w.dim(0), E = w.dim(1);
  check(x.dim(x.ndim() - 1) == D, "linear: inner dimension mismatch");
  check(b.ndim() == 1 && b.dim(0) == E, "linear: bias mismatch");
  const std::int64_t M = x.numel() / D;

  std::vector<int> oshape = x.shape;
  oshape.back() = E;
  Tensor out(oshape);
  for (std::int64_t m = 0; m < M; ++m) {
    const double* xr = x.data.data() + m * D;
    double* orow = out.data.data() + m * E;
    for (int e = 0; e < E; ++e) orow[e] = b(e);
    for (int d = 0; d < D; ++d) {
      const double xv_ = xr[d];
      if (xv_ == 0.0) continue;
      const double* wrow = w.data.data() + static_cast<std::size_t>(d) * E;
      for (int e = 0; e < E; ++e) orow[e] += xv_ * wrow[e];
    }
  }

  return make_node(std::move(out), {xv.id, wv.id, bv.id},
                   [M, D, E](Graph& g, int self) {
                     const auto& inputs =
                         g.inputs_of(self);
                     const int xid = inputs[0], wid = inputs[1], bid = inputs[2];
                     const Tensor& go = g.grad_of(self);
                     const Tensor& x = g.val_of(xid);
                     const Tensor& w = g.val_of(wid);
                     const bool need_x = g.node_requires_grad(xid);
                     const bool need_w = g.node_requires_grad(wid);
                     const bool need_b = g.node_requires_grad(bid);
                     Tensor& gx = g.grad_of(xid);
                     Tensor& gw = g.grad_of(wid);
                     Tensor& gb = g.grad_of(bid);
                     for (std::int64_t m = 0; m < M; ++m) {
                       const double* gorow = go.data.data() + m * E;
                       const double* xr = x.data.data() + m * D;
                       if (need_b) {
                         for (int e = 0; e < E; ++e) gb(e) += gorow[e];
                       }
                       for (int d = 0; d < D; ++d) {
                         const double* wrow =
                             w.data.data() + static_cast<std::size_t>(d) * E;
                         double acc = 0.0;
                         for (int e = 0; e < E; ++e) {
                           acc += gorow[e] * wrow[e];
                         }
                         if (need_x) gx.data[m * D + d] += acc;
                         if (need_w) {
                           double* gwrow =
                               gw.data.data() + static_cast<std::size_t>(d) * E;
                           const double xv_ = xr[d];
                           for (int e = 0; e < E; ++e) {
                             gwrow[e] += xv_ * gorow[e];
                           }
                         }
                       }
                     }
                   });
}

Value Graph::relu(Value xv) {
  const Tensor& x = val(xv);
  Tensor out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {xv.id}, [](Graph& g, int self) {
    const int xid = g.inputs_of(self)[0];
    if (!g.node_requires_grad(xid)) return;
    const Tensor& go = g.grad_of(self);
    const Tensor& x = g.val_of(xid);
    Tensor& gx = g.grad_of(xid);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      if (x.data[i] > 0.0) gx.data[i] += go.data[i];
    }
  });
}

Value Graph::add(Value av, Value bv) {
  const Tensor& a = val(av);
  const Tensor& b = val(bv);
  check(a.same_shape(b), "add: shape mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return make_node(std::move(out), {av.id, bv.id}, [](Graph& g, int self) {
    const auto& inputs = g.inputs_of(self);
    const Tensor& go = g.grad_of(self);
    for (int in : inputs) {
      if (!g.node_requires_grad(in)) continue;
      Tensor& gi = g.grad_of(in);
      for (std::size_t i = 0; i < go.data.size(); ++i) {
        gi.data[i] += go.data[i];
      }
    }
  });
}

Value Graph::concat_channels(Value av, Value bv) {
  const Tensor& a = val(av);
  const Tensor& b = val(bv);
  check(a.ndim() == 4 && b.ndim() == 4, "concat_channels: inputs must be 4-d");
  check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
        "concat_channels: spatial mismatch");
  const int N = a.dim(0), C1 = a.dim(1), C2 = b.dim(1);
  const int H = a.dim(2), W = a.dim(3);
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  Tensor out({N, C1 + C2, H, W});
  for (int n = 0; n < N; ++n) {
    std::copy_n(&a.at4(n, 0, 0, 0), static_cast<std::size_t>(C1) * plane,
                &out.at4(n, 0, 0, 0));
    std::copy_n(&b.at4(n, 0, 0, 0), static_cast<std::size_t>(C2) * plane,
                &out.at4(n, C1, 0, 0));
  }
  return make_node(std::move(out), {av.id, bv.id},
                   [N, C1, C2, plane](Graph& g, int self) {
                     const auto& inputs =
                         g.inputs_of(self);
                     const Tensor& go = g.grad_of(self);
                     for (int n = 0; n < N; ++n) {
                       const double* gn = &go.at4(n, 0, 0, 0);
                       if (g.node_requires_grad(inputs[0])) {
                         double* ga = &g.grad_of(inputs[0]).at4(n, 0, 0, 0);
                         for (std::size_t i = 0; i < C1 * plane; ++i) {
                           ga[i] += gn[i];
                         }
                       }
                       if (g.node_requires_grad(inputs[1])) {
                         double* gb = &g.grad_of(inputs[1]).at4(n, 0, 0, 0);
                         const double* gtail = gn + C1 * plane;
                         for (std::size_t i = 0; i < C2 * plane; ++i) {
                           gb[i] += gtail[i];
                         }
                       }
                     }
                   });
}

Value Graph::global_max_pool(Value xv) {
  const Tensor& x = val(xv);
  check(x.ndim() == 4, "global_max_pool: input must be 4-d");
  const int N = x.dim(0), C = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  check(plane > 0, "global_max_pool: empty spatial extent");

  Tensor out({N, C});
  auto argmax = std::make_shared<std::vector<std::size_t>>(
      static_cast<std::size_t>(N) * C);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const double* p = &x.at4(n, c, 0, 0);
      std::size_t best = 0;
      for (std::size_t i = 1; i < plane; ++i) {
        if (p[i] > p[best]) best = i;  // strict: first maximum wins
      }
      out.at2(n, c) = p[best];
      (*argmax)[static_cast<std::size_t>(n) * C + c] = best;
    }
  }
  return make_node(std::move(out), {xv.id},
                   [N, C, plane, argmax](Graph& g, int self) {
                     const int xid =
                         g.inputs_of(self)[0];
                     if (!g.node_requires_grad(xid)) return;
                     const Tensor& go = g.grad_of(self);
                     Tensor& gx = g.grad_of(xid);
                     for (int n = 0; n < N; ++n) {
                       for (int c = 0; c < C; ++c) {
                         double* p = &gx.at4(n, c, 0, 0);
                         p[(*argmax)[static_cast<std::size_t>(n) * C + c]] +=
                             go.at2(n, c);
                       }
                     }
                   });
}

Value Graph::slice_last(Value xv, int start, int len) {
  const Tensor& x = val(xv);
  const int D = x.dim(x.ndim() - 1);
  check(start >= 0 && len > 0 && start + len <= D, "slice_last: out of range");
  const std::int64_t M = x.numel() / D;

  std::vector<int> oshape = x.shape;
  oshape.back() = len;
  Tensor out(oshape);
  for (std::int64_t m = 0; m < M; ++m) {
    std::copy_n(x.data.data() + m * D + start, len, out.data.data() + m * len);
  }
  return make_node(std::move(out), {xv.id}, [M, D, start, len](Graph& g,
                                                               int self) {
    const int xid = g.inputs_of(self)[0];
    if (!g.node_requires_grad(xid)) return;
    const Tensor& go = g.grad_of(self);
    Tensor& gx = g.grad_of(xid);
    for (std::int64_t m = 0; m < M; ++m) {
      for (int i = 0; i < len; ++i) {
        gx.data[m * D + start + i] += go.data[m * len + i];
      }
    }
  });
}

Value Graph::sum_all(Value xv) {
  const Tensor& x = val(xv);
  double acc = 0.0;
  for (double v : x.data) acc += v;
  return make_node(Tensor::scalar(acc), {xv.id}, [](Graph& g, int self) {
    const int xid = g.inputs_of(self)[0];
    if (!g.node_requires_grad(xid)) return;
    const double go = g.grad_of(self).data[0];
    for (double& v : g.grad_of(xid).data) v += go;
  });
}

Value Graph::scale(Value xv, double c) {
  Tensor out = val(xv);
  for (double& v : out.data) v *= c;
  return make_node(std::move(out), {xv.id}, [c](Graph& g, int self) {
    const int xid = g.inputs_of(self)[0];
    if (!g.node_requires_grad(xid)) return;
    const Tensor& go = g.grad_of(self);
    Tensor& gx = g.grad_of(xid);
    for (std::size_t i = 0; i < go.data.size(); ++i) {
      gx.data[i] += c * go.data[i];
    }
  });
}

Value Graph::laplace_nll(Value muv, Value logbv,
                         const std::array<double, 4>& target) {
  const Tensor& mu = val(muv);
  const Tensor& logb = val(logbv);
  check(mu.numel() == 4 && logb.numel() == 4,
        "laplace_nll: mu and logb must have 4 elements");

  auto residual = [](const std::array<double, 4>& t, const Tensor& m, int i) {
    const double r =
        t[static_cast<std::size_t>(i)] - m.data[static_cast<std::size_t>(i)];
    return i == 3 ? wrap_angle(r) : r;
  };

  double loss = 4.0 * kLog2;
  for (int i = 0; i < 4; ++i) {
    loss += logb.data[static_cast<std::size_t>(i)] +
            std::abs(residual(target, mu, i)) *
                std::exp(-logb.data[static_cast<std::size_t>(i)]);
  }
  return make_node(
      Tensor::scalar(loss), {muv.id, logbv.id},
      [target, residual](Graph& g, int self) {
        const auto& inputs = g.inputs_of(self);
        const int muid = inputs[0], logbid = inputs[1];
        const double go = g.grad_of(self).data[0];
        const Tensor& mu = g.val_of(muid);
        const Tensor& logb = g.val_of(logbid);
        for (int i = 0; i < 4; ++i) {
          const double r = residual(target, mu, i);
          const double inv_b = std::exp(-logb.data[static_cast<std::size_t>(i)]);
          const double sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
          if (g.node_requires_grad(muid)) {
            g.grad_of(muid).data[static_cast<std::size_t>(i)] +=
                go * (-sgn) * inv_b;
          }
          if (g.node_requires_grad(logbid)) {
            g.grad_of(logbid).data[static_cast<std::size_t>(i)] +=
                go * (1.0 - std::abs(r) * inv_b);
          }
        }
      });
}

}  // namespace motrack
