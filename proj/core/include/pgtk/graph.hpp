// Copyright 2026 The pagetracker Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Reverse-mode tape.  Ops execute eagerly and append a node, so node ids
// are already a topological order and backward is a single reverse sweep.
// One Graph is built per forward evaluation and discarded afterwards;
// parameters live outside the graph in a ParamStore.

#pragma once

#include <atomic>
#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pgtk/ops.hpp"
#include "pgtk/tensor.hpp"

namespace pgtk {

namespace debug {
// Test hook: when nonzero, this value is added to one conv kernel gradient
// element during backward.  Lets the verify command demonstrate that the
// finite-difference harness actually catches a wrong gradient.
inline std::atomic<double> grad_fault{0.0};
}  // namespace debug

template <typename T>
class ParamStore {
 public:
  int add(std::string name, Tensor<T> value) {
    if (by_name_.count(name))
      fail<ContractViolation>("duplicate parameter name: ", name);
    by_name_[name] = int(params_.size());
    names_.push_back(name);
    params_.push_back(std::move(value));
    return int(params_.size()) - 1;
  }

  int count() const { return int(params_.size()); }
  const std::string& name(int pid) const { return names_[size_t(pid)]; }
  Tensor<T>& value(int pid) { return params_[size_t(pid)]; }
  const Tensor<T>& value(int pid) const { return params_[size_t(pid)]; }

  int find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? -1 : it->second;
  }

  int64_t total_scalars() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (int i = 0; i < count(); ++i) out.add(names_[size_t(i)], params_[size_t(i)].template cast<U>());
    return out;
  }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> by_name_;
};

// Gradient accumulator keyed by parameter id, matching a ParamStore layout.
template <typename T>
class GradBuffer {
 public:
  explicit GradBuffer(const ParamStore<T>& store) {
    grads_.reserve(size_t(store.count()));
    for (int i = 0; i < store.count(); ++i) grads_.emplace_back(store.value(i).shape());
  }

  Tensor<T>& operator[](int pid) { return grads_[size_t(pid)]; }
  const Tensor<T>& operator[](int pid) const { return grads_[size_t(pid)]; }
  int count() const { return int(grads_.size()); }

  void add(const GradBuffer& other) {
    for (size_t i = 0; i < grads_.size(); ++i) {
      const int64_t n = grads_[i].numel();
      for (int64_t j = 0; j < n; ++j) grads_[i][j] += other.grads_[i][j];
    }
  }

  void scale(T s) {
    for (auto& g : grads_)
      for (int64_t j = 0; j < g.numel(); ++j) g[j] *= s;
  }

  void zero() {
    for (auto& g : grads_)
      for (int64_t j = 0; j < g.numel(); ++j) g[j] = T(0);
  }

 private:
  std::vector<Tensor<T>> grads_;
};

template <typename T>
class Graph {
 public:
  Graph() = default;
  explicit Graph(const ParamStore<T>* store) : store_(store) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ----

  int input(Tensor<T> v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, {}, nullptr);
  }

  int param(int pid) {
    check(store_ != nullptr, "graph has no parameter store");
    auto it = param_nodes_.find(pid);
    if (it != param_nodes_.end()) return it->second;
    const int id = push(store_->value(pid), true, {}, nullptr);
    nodes_[size_t(id)].param_id = pid;
    param_nodes_[pid] = id;
    return id;
  }

  // ---- structure ----

  const Tensor<T>& value(int id) const { return nodes_[size_t(id)].value; }
  const ParamStore<T>* store() const { return store_; }
  int size() const { return int(nodes_.size()); }

  bool has_grad(int id) const {
    return size_t(id) < grads_.size() && grad_set_[size_t(id)];
  }
  // Gradient accumulated at a node during the last backward sweep.
  const Tensor<T>& grad(int id) const {
    check(has_grad(id), "no gradient recorded at node");
    return grads_[size_t(id)];
  }

  void for_each_param_grad(const std::function<void(int pid, const Tensor<T>&)>& fn) const {
    for (const auto& [pid, node] : param_nodes_)
      if (has_grad(node)) fn(pid, grads_[size_t(node)]);
  }

  void accumulate_param_grads(GradBuffer<T>& out, T scale = T(1)) const {
    for (const auto& [pid, node] : param_nodes_) {
      if (!has_grad(node)) continue;
      const Tensor<T>& g = grads_[size_t(node)];
      Tensor<T>& dst = out[pid];
      for (int64_t i = 0; i < g.numel(); ++i) dst[i] += scale * g[i];
    }
  }

  // ---- ops ----

  int conv2d(int x, int k, int b, int pad, int stride) {
    const Tensor<T>* bias = b >= 0 ? &value(b) : nullptr;
    Tensor<T> y = ops::conv2d_fwd(value(x), value(k), bias, pad, stride);
    std::vector<int> ins = b >= 0 ? std::vector<int>{x, k, b} : std::vector<int>{x, k};
    const bool needs = any_needs(ins);
    return push(std::move(y), needs, std::move(ins),
                [x, k, b, pad, stride](Graph& g, int id) {
                  Tensor<T>* gx = g.writable_grad_if_needed(x);
                  Tensor<T>* gk = g.writable_grad_if_needed(k);
                  Tensor<T>* gb = b >= 0 ? g.writable_grad_if_needed(b) : nullptr;
                  ops::conv2d_bwd(g.value(x), g.value(k), g.grads_[size_t(id)],
                                  pad, stride, gx, gk, gb);
                  const double fault = debug::grad_fault.load();
                  if (fault != 0.0 && gk) (*gk)[0] += T(fault);
                });
  }

  int dense(int x, int w, int b) {
    const Tensor<T>* bias = b >= 0 ? &value(b) : nullptr;
    Tensor<T> y = ops::dense_fwd(value(x), value(w), bias);
    std::vector<int> ins = b >= 0 ? std::vector<int>{x, w, b} : std::vector<int>{x, w};
    const bool needs = any_needs(ins);
    return push(std::move(y), needs, std::move(ins),
                [x, w, b](Graph& g, int id) {
                  Tensor<T>* gx = g.writable_grad_if_needed(x);
                  Tensor<T>* gw = g.writable_grad_if_needed(w);
                  Tensor<T>* gb = b >= 0 ? g.writable_grad_if_needed(b) : nullptr;
                  ops::dense_bwd(g.value(x), g.value(w), g.grads_[size_t(id)], gx, gw, gb);
                });
  }

  int layer_norm(int x, int gain, int bias, double eps = 1e-5) {
    Tensor<T> y = ops::layer_norm_fwd(value(x), value(gain), value(bias), eps);
    return push(std::move(y), any_needs({x, gain, bias}), {x, gain, bias},
                [x, gain, bias, eps](Graph& g, int id) {
                  Tensor<T>* gx = g.writable_grad_if_needed(x);
                  Tensor<T>* gg = g.writable_grad_if_needed(gain);
                  Tensor<T>* gb = g.writable_grad_if_needed(bias);
                  ops::layer_norm_bwd(g.value(x), g.value(gain), g.grads_[size_t(id)],
                                      eps, gx, gg, gb);
                });
  }

  int elu(int x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> y(xv.shape());
    for (int64_t i = 0; i < xv.numel(); ++i) {
      const T v = xv[i];
      y[i] = v > T(0) ? v : ops::expm1_fast(v);
    }
    return push(std::move(y), any_needs({x}), {x}, [x](Graph& g, int id) {
      Tensor<T>* gx = g.writable_grad_if_needed(x);
      if (!gx) return;
      const Tensor<T>& xv = g.value(x);
      const Tensor<T>& yv = g.value(id);
      const Tensor<T>& gy = g.grads_[size_t(id)];
      for (int64_t i = 0; i < xv.numel(); ++i)
        (*gx)[i] += gy[i] * (xv[i] > T(0) ? T(1) : yv[i] + T(1));
    });
  }

  int sigmoid(int x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> y(xv.shape());
    for (int64_t i = 0; i < xv.numel(); ++i) y[i] = T(1) / (T(1) + ops::exp_fast(-xv[i]));
    return push(std::move(y), any_needs({x}), {x}, [x](Graph& g, int id) {
      Tensor<T>* gx = g.writable_grad_if_needed(x);
      if (!gx) return;
      const Tensor<T>& yv = g.value(id);
      const Tensor<T>& gy = g.grads_[size_t(id)];
      for (int64_t i = 0; i < yv.numel(); ++i)
        (*gx)[i] += gy[i] * yv[i] * (T(1) - yv[i]);
    });
  }

  int tanh_op(int x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> y(xv.shape());
    for (int64_t i = 0; i < xv.numel(); ++i) y[i] = std::tanh(xv[i]);
    return push(std::move(y), any_needs({x}), {x}, [x](Graph& g, int id) {
      Tensor<T>* gx = g.writable_grad_if_needed(x);
      if (!gx) return;
      const Tensor<T>& yv = g.value(id);
      const Tensor<T>& gy = g.grads_[size_t(id)];
      for (int64_t i = 0; i < yv.numel(); ++i)
        (*gx)[i] += gy[i] * (T(1) - yv[i] * yv[i]);
    });
  }

  int max_pool2(int x) {
    Tensor<T> y = ops::max_pool2_fwd(value(x));
    return push(std::move(y), any_needs({x}), {x}, [x](Graph& g, int id) {
      Tensor<T>* gx = g.writable_grad_if_needed(x);
      if (gx) ops::max_pool2_bwd(g.value(x), g.grads_[size_t(id)], gx);
    });
  }

  int bilinear_upsample2(int x) {
    Tensor<T> y = ops::upsample2_fwd(value(x));
    return push(std::move(y), any_needs({x}), {x}, [x](Graph& g, int id) {
      Tensor<T>* gx = g.writable_grad_if_needed(x);
      if (gx) ops::upsample2_bwd(g.value(x), g.grads_[size_t(id)], gx);
    });
  }

  // y[c,·] = s[c] * x[c,·] + t[c]; the FiLM core.
  int channel_affine(int x, int s, int t) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& sv = value(s);
    const Tensor<T>& tv = value(t);
    const int c = xv.dim(0);
    if (sv.rank() != 1 || sv.dim(0) != c || tv.rank() != 1 || tv.dim(0) != c)
      fail<ContractViolation>("channel_affine: scale/shift must be [", c, "]");
    const int64_t inner = xv.numel() / c;
    Tensor<T> y(xv.shape());
    for (int ci = 0; ci < c; ++ci) {
      const T sc = sv[ci], tc = tv[ci];
      const T* xs = xv.data() + int64_t(ci) * inner;
      T* ys = y.data() + int64_t(ci) * inner;
      for (int64_t i = 0; i < inner; ++i) ys[i] = sc * xs[i] + tc;
    }
    return push(std::move(y), any_needs({x, s, t}), {x, s, t},
                [x, s, t, c, inner](Graph& g, int id) {
                  const Tensor<T>& gy = g.grads_[size_t(id)];
                  const Tensor<T>& xv = g.value(x);
                  const Tensor<T>& sv = g.value(s);
                  Tensor<T>* gx = g.writable_grad_if_needed(x);
                  Tensor<T>* gs = g.writable_grad_if_needed(s);
                  Tensor<T>* gt = g.writable_grad_if_needed(t);
                  for (int ci = 0; ci < c; ++ci) {
                    const T* gys = gy.data() + int64_t(ci) * inner;
                    const T* xs = xv.data() + int64_t(ci) * inner;
                    if (gx) {
                      T* gxs = gx->data() + int64_t(ci) * inner;
                      const T sc = sv[ci];
                      for (int64_t i = 0; i < inner; ++i) gxs[i] += gys[i] * sc;
                    }
                    if (gs) {
                      T acc = 0;
                      for (int64_t i = 0; i < inner; ++i) acc += gys[i] * xs[i];
                      (*gs)[ci] += acc;
                    }
                    if (gt) {
                      T acc = 0;
                      for (int64_t i = 0; i < inner; ++i) acc += gys[i];
                      (*gt)[ci] += acc;
                    }
                  }
                });
  }

  int concat_channels(int a, int b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2))
      fail<ContractViolation>("concat_channels: spatial dims must match: ",
                              av.shape_str(), " vs ", bv.shape_str());
    Tensor<T> y({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
    std::copy(av.data(), av.data() + av.numel(), y.data());
    std::copy(bv.data(), bv.data() + bv.numel(), y.data() + av.numel());
    return push(std::move(y), any_needs({a, b}), {a, b}, [a, b](Graph& g, int id) {
      const Tensor<T>& gy = g.grads_[size_t(id)];
      Tensor<T>* ga = g.writable_grad_if_needed(a);
      Tensor<T>* gb = g.writable_grad_if_needed(b);
      const int64_t na = g.value(a).numel();
      if (ga)
        for (int64_t i = 0; i < na; ++i) (*ga)[i] += gy[i];
      if (gb) {
        const int64_t nb = g.value(b).numel();
        for (int64_t i = 0; i < nb; ++i) (*gb)[i] += gy[na + i];
      }
    });
  }

  int crop2d(int x, int top, int left, int h, int w) {
    const Tensor<T>& xv = value(x);
    if (xv.rank() != 3) fail<ContractViolation>("crop2d: input must be [C,H,W]");
    if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > xv.dim(1) || left + w > xv.dim(2))
      fail<ContractViolation>("crop2d: window out of range");
    const int c = xv.dim(0);
    Tensor<T> y({c, h, w});
    for (int ci = 0; ci < c; ++ci)
      for (int i = 0; i < h; ++i)
        std::copy(&xv.at(ci, top + i, left), &xv.at(ci, top + i, left) + w, &y.at(ci, i, 0));
    return push(std::move(y), any_needs({x}), {x},
                [x, top, left, h, w, c](Graph& g, int id) {
                  Tensor<T>* gx = g.writable_grad_if_needed(x);
                  if (!gx) return;
                  const Tensor<T>& gy = g.grads_[size_t(id)];
                  for (int ci = 0; ci < c; ++ci)
                    for (int i = 0; i < h; ++i)
                      for (int j = 0; j < w; ++j)
                        gx->at(ci, top + i, left + j) += gy.at(ci, i, j);
                });
  }

  int slice(int x, int start, int len) {
    const Tensor<T>& xv = value(x);
    if (xv.rank() != 1) fail<ContractViolation>("slice: input must be rank 1");
    if (start < 0 || len < 1 || start + len > xv.dim(0))
      fail<ContractViolation>("slice: range out of bounds");
    Tensor<T> y({len});
    std::copy(xv.data() + start, xv.data() + start + len, y.data());
    return push(std::move(y), any_needs({x}), {x}, [x, start, len](Graph& g, int id) {
      Tensor<T>* gx = g.writable_grad_if_needed(x);
      if (!gx) return;
      const Tensor<T>& gy = g.grads_[size_t(id)];
      for (int i = 0; i < len; ++i) (*gx)[start + i] += gy[i];
    });
  }

  int reshape(int x, std::vector<int> shape) {
    Tensor<T> y(std::move(shape), value(x).vec());
    if (y.numel() != value(x).numel())
      fail<ContractViolation>("reshape: numel mismatch");
    return push(std::move(y), any_needs({x}), {x}, [x](Graph& g, int id) {
      Tensor<T>* gx = g.writable_grad_if_needed(x);
      if (!gx) return;
      const Tensor<T>& gy = g.grads_[size_t(id)];
      for (int64_t i = 0; i < gy.numel(); ++i) (*gx)[i] += gy[i];
    });
  }

  int add(int a, int b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (!av.same_shape(bv))
      fail<ContractViolation>("add: shape mismatch ", av.shape_str(), " vs ", bv.shape_str());
    Tensor<T> y(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) y[i] = av[i] + bv[i];
    return push(std::move(y), any_needs({a, b}), {a, b}, [a, b](Graph& g, int id) {
      const Tensor<T>& gy = g.grads_[size_t(id)];
      Tensor<T>* ga = g.writable_grad_if_needed(a);
      Tensor<T>* gb = g.writable_grad_if_needed(b);
      for (int64_t i = 0; i < gy.numel(); ++i) {
        if (ga) (*ga)[i] += gy[i];
        if (gb) (*gb)[i] += gy[i];
      }
    });
  }

  int mul(int a, int b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (!av.same_shape(bv))
      fail<ContractViolation>("mul: shape mismatch ", av.shape_str(), " vs ", bv.shape_str());
    Tensor<T> y(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) y[i] = av[i] * bv[i];
    return push(std::move(y), any_needs({a, b}), {a, b}, [a, b](Graph& g, int id) {
      const Tensor<T>& gy = g.grads_[size_t(id)];
      const Tensor<T>& av = g.value(a);
      const Tensor<T>& bv = g.value(b);
      Tensor<T>* ga = g.writable_grad_if_needed(a);
      Tensor<T>* gb = g.writable_grad_if_needed(b);
      for (int64_t i = 0; i < gy.numel(); ++i) {
        if (ga) (*ga)[i] += gy[i] * bv[i];
        if (gb) (*gb)[i] += gy[i] * av[i];
      }
    });
  }

  int div(int a, int b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (!av.same_shape(bv))
      fail<ContractViolation>("div: shape mismatch ", av.shape_str(), " vs ", bv.shape_str());
    Tensor<T> y(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) y[i] = av[i] / bv[i];
    return push(std::move(y), any_needs({a, b}), {a, b}, [a, b](Graph& g, int id) {
      const Tensor<T>& gy = g.grads_[size_t(id)];
      const Tensor<T>& bv = g.value(b);
      const Tensor<T>& yv = g.value(id);
      Tensor<T>* ga = g.writable_grad_if_needed(a);
      Tensor<T>* gb = g.writable_grad_if_needed(b);
      for (int64_t i = 0; i < gy.numel(); ++i) {
        if (ga) (*ga)[i] += gy[i] / bv[i];
        if (gb) (*gb)[i] -= gy[i] * yv[i] / bv[i];
      }
    });
  }

  // y = scale * x + shift with scalar constants.
  int affine(int x, T scale, T shift) {
    const Tensor<T>& xv = value(x);
    Tensor<T> y(xv.shape());
    for (int64_t i = 0; i < xv.numel(); ++i) y[i] = scale * xv[i] + shift;
    return push(std::move(y), any_needs({x}), {x}, [x, scale](Graph& g, int id) {
      Tensor<T>* gx = g.writable_grad_if_needed(x);
      if (!gx) return;
      const Tensor<T>& gy = g.grads_[size_t(id)];
      for (int64_t i = 0; i < gy.numel(); ++i) (*gx)[i] += gy[i] * scale;
    });
  }

  int sum(int x) {
    const Tensor<T>& xv = value(x);
    T acc = 0;
    for (int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    return push(Tensor<T>::scalar(acc), any_needs({x}), {x}, [x](Graph& g, int id) {
      Tensor<T>* gx = g.writable_grad_if_needed(x);
      if (!gx) return;
      const T gy = g.grads_[size_t(id)][0];
      for (int64_t i = 0; i < gx->numel(); ++i) (*gx)[i] += gy;
    });
  }

  int detach(int x) { return push(value(x), false, {}, nullptr); }

  // ---- backward ----

  void backward(int loss) {
    check(value(loss).numel() == 1, "backward: loss must be scalar");
    backward_seeded({{loss, Tensor<T>::scalar(T(1))}});
  }

  // Seeds several nodes at once and runs one reverse sweep; used to pull
  // sequence gradients through a shared recurrent tape.
  void backward_seeded(const std::vector<std::pair<int, Tensor<T>>>& seeds) {
    check(!swept_, "backward already ran on this graph");
    swept_ = true;
    grads_.resize(nodes_.size());
    grad_set_.assign(nodes_.size(), 0);
    int top = -1;
    for (const auto& [id, seed] : seeds) {
      check(id >= 0 && id < size(), "backward: bad node id");
      if (!seed.same_shape(value(id)))
        fail<ContractViolation>("backward seed shape ", seed.shape_str(),
                                " does not match node value ", value(id).shape_str());
      Tensor<T>& dst = *writable_grad(id);
      for (int64_t i = 0; i < seed.numel(); ++i) dst[i] += seed[i];
      if (id > top) top = id;
    }
    for (int id = top; id >= 0; --id) {
      Node& n = nodes_[size_t(id)];
      if (!grad_set_[size_t(id)] || !n.needs_grad || !n.backprop) continue;
      n.backprop(*this, id);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<int> inputs;
    std::function<void(Graph&, int)> backprop;
    bool needs_grad = false;
    int param_id = -1;
  };

  bool any_needs(const std::vector<int>& ids) const {
    for (int id : ids)
      if (nodes_[size_t(id)].needs_grad) return true;
    return false;
  }

  Tensor<T>* writable_grad(int id) {
    if (!grad_set_[size_t(id)]) {
      grads_[size_t(id)] = Tensor<T>(nodes_[size_t(id)].value.shape());
      grad_set_[size_t(id)] = 1;
    }
    return &grads_[size_t(id)];
  }

  Tensor<T>* writable_grad_if_needed(int id) {
    return nodes_[size_t(id)].needs_grad ? writable_grad(id) : nullptr;
  }

  int push(Tensor<T> value, bool needs_grad, std::vector<int> inputs,
           std::function<void(Graph&, int)> backprop) {
    for (int id : inputs)
      check(id >= 0 && id < size(), "op input refers to unknown node");
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.backprop = std::move(backprop);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  const ParamStore<T>* store_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::vector<char> grad_set_;
  std::unordered_map<int, int> param_nodes_;
  bool swept_ = false;
};

// One LSTM cell step from tape primitives.  Gate layout in the fused
// projection is [input, forget, cell, output].  State h and c are [units].
template <typename T>
struct LstmStepNodes {
  int h, c;
};

template <typename T>
LstmStepNodes<T> lstm_step(Graph<T>& g, int x, int h, int c, int wx, int wh, int b) {
  const int units = g.value(h).dim(0);
  const int ax = g.dense(x, wx, b);
  const int ah = g.dense(h, wh, -1);
  const int a = g.add(ax, ah);
  const int gi = g.sigmoid(g.slice(a, 0, units));
  const int gf = g.sigmoid(g.slice(a, units, units));
  const int gc = g.tanh_op(g.slice(a, 2 * units, units));
  const int go = g.sigmoid(g.slice(a, 3 * units, units));
  const int c2 = g.add(g.mul(gf, c), g.mul(gi, gc));
  const int h2 = g.mul(go, g.tanh_op(c2));
  return {h2, c2};
}

}  // namespace pgtk
