#pragma once

// Reverse-mode differentiation over a recorded list of primitive operations.
//
// Values are computed eagerly when an op is recorded. backward() walks the node
// list once in reverse, so every node is visited at most once and inputs always
// precede their consumers.

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hsr/error.hpp"
#include "hsr/ops.hpp"
#include "hsr/resample.hpp"
#include "hsr/tensor.hpp"

namespace hsr::ad {

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Accumulates input gradients. in_grads[i] matches inputs[i] in shape.
using Adjoint = std::function<void(const Tensor& grad_out, std::span<Tensor> in_grads)>;

class Gradients {
 public:
  Gradients(std::vector<Tensor> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  /// Gradient for a node; zero tensor if the loss does not depend on it.
  Tensor at(Var v) const {
    require(v.id < grads_.size(), "gradient lookup: unknown node ", v.id);
    if (grads_[v.id].empty()) return Tensor(shapes_[v.id]);
    return grads_[v.id];
  }

 private:
  std::vector<Tensor> grads_;
  std::vector<Shape> shapes_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value) { return push_node(std::move(value), "leaf", {}, nullptr, true, true); }
  Var constant(Tensor value) { return push_node(std::move(value), "constant", {}, nullptr, true, false); }

  /// Record a primitive. A null adjoint marks the op as non-differentiable; backward()
  /// raises if the loss depends on it through a differentiable input.
  Var record(Tensor value, std::string op, std::vector<Var> inputs, Adjoint adjoint) {
    bool needs = false;
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& v : inputs) {
      require(v.tape == this, op, ": input belongs to a different tape");
      ids.push_back(v.id);
      needs = needs || nodes_[v.id].requires_grad;
    }
    return push_node(std::move(value), std::move(op), std::move(ids), std::move(adjoint), false, needs);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Gradients backward(Var loss) const {
    require(loss.tape == this, "backward: loss belongs to a different tape");
    require<ShapeError>(nodes_[loss.id].value.is_scalar(), "backward: loss must be scalar, got shape ",
                        shape_str(nodes_[loss.id].value.shape()));
    std::vector<Tensor> grads(nodes_.size());
    grads[loss.id] = Tensor(nodes_[loss.id].value.shape(), 1.0);
    std::vector<Tensor> scratch;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (n.is_source || !n.requires_grad || grads[i].empty()) continue;
      if (!n.adjoint) fail("backward: primitive '", n.op, "' has no registered adjoint");
      scratch.clear();
      for (std::size_t in : n.inputs) scratch.emplace_back(nodes_[in].value.shape());
      n.adjoint(grads[i], scratch);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t in = n.inputs[k];
        if (!nodes_[in].requires_grad) continue;
        if (grads[in].empty())
          grads[in] = std::move(scratch[k]);
        else
          grads[in] += scratch[k];
      }
    }
    std::vector<Shape> shapes;
    shapes.reserve(nodes_.size());
    for (const Node& n : nodes_) shapes.push_back(n.value.shape());
    return Gradients(std::move(grads), std::move(shapes));
  }

 private:
  struct Node {
    Tensor value;
    std::string op;
    std::vector<std::size_t> inputs;
    Adjoint adjoint;
    bool is_source = false;
    bool requires_grad = false;
  };

  Var push_node(Tensor value, std::string op, std::vector<std::size_t> inputs, Adjoint adjoint, bool source,
                bool requires_grad) {
    nodes_.push_back(Node{std::move(value), std::move(op), std::move(inputs), std::move(adjoint), source,
                          requires_grad});
    return Var{this, nodes_.size() - 1};
  }

  std::deque<Node> nodes_;  // stable addresses: adjoints hold pointers to values
};

inline const Tensor& Var::value() const {
  require(tape != nullptr, "Var: not attached to a tape");
  return tape->value(id);
}

// --- primitives --------------------------------------------------------------

inline Var conv2d(Var x, Var kernel, std::optional<Var> bias, const ops::Conv2dOptions& o) {
  Tape& t = *x.tape;
  const Tensor* b = bias ? &bias->value() : nullptr;
  Tensor y = ops::conv2d(x.value(), kernel.value(), b, o);
  std::vector<Var> in{x, kernel};
  if (bias) in.push_back(*bias);
  const Tensor* xv = &x.value();
  const Tensor* kv = &kernel.value();
  return t.record(std::move(y), "conv2d", std::move(in), [xv, kv, o, has_bias = bias.has_value()](const Tensor& g, std::span<Tensor> gi) {
    ops::conv2d_backward(*xv, *kv, g, o, &gi[0], &gi[1], has_bias ? &gi[2] : nullptr);
  });
}

inline Var activation(Var x, ops::Activation kind) {
  const Tensor* xv = &x.value();
  Tensor y = ops::activation(*xv, kind);
  const bool is_gelu = kind == ops::Activation::gelu;
  Tensor yv = is_gelu ? Tensor{} : y;
  return x.tape->record(std::move(y), is_gelu ? "gelu" : "sigmoid", {x},
                        [xv, is_gelu, yv = std::move(yv)](const Tensor& g, std::span<Tensor> gi) {
                          for (std::size_t i = 0; i < g.size(); ++i)
                            gi[0][i] = g[i] * (is_gelu ? ops::gelu_grad((*xv)[i]) : yv[i] * (1.0 - yv[i]));
                        });
}

inline Var gelu(Var x) { return activation(x, ops::Activation::gelu); }
inline Var sigmoid(Var x) { return activation(x, ops::Activation::sigmoid); }

inline Var avgpool_axes(Var x, ops::Keep keep) {
  const Shape in_shape = x.shape();
  Tensor y = ops::avgpool_axes(x.value(), keep);
  const double n = static_cast<double>(shape_size(in_shape) / y.size());
  return x.tape->record(std::move(y), "avgpool_axes", {x}, [in_shape, n](const Tensor& g, std::span<Tensor> gi) {
    gi[0] = ops::expand(g, in_shape);
    gi[0] *= 1.0 / n;
  });
}

inline Var expand(Var x, const Shape& target) {
  const Shape small = x.shape();
  return x.tape->record(ops::expand(x.value(), target), "expand", {x},
                        [small](const Tensor& g, std::span<Tensor> gi) { gi[0] = ops::reduce_to(g, small); });
}

inline Var broadcast_mul(Var feature, Var gate) {
  const Tensor* fv = &feature.value();
  const Tensor* gv = &gate.value();
  return feature.tape->record(ops::broadcast_mul(*fv, *gv), "broadcast_mul", {feature, gate},
                              [fv, gv](const Tensor& g, std::span<Tensor> gi) {
                                const Tensor ge = ops::expand(*gv, fv->shape());
                                Tensor gf(fv->shape());
                                for (std::size_t i = 0; i < g.size(); ++i) {
                                  gi[0][i] = g[i] * ge[i];
                                  gf[i] = g[i] * (*fv)[i];
                                }
                                gi[1] = ops::reduce_to(gf, gv->shape());
                              });
}

inline Var gather_channels(Var x, std::vector<std::size_t> index, std::string op = "gather_channels") {
  Tensor y = ops::gather_channels(x.value(), index);
  return x.tape->record(std::move(y), std::move(op), {x}, [index = std::move(index)](const Tensor& g, std::span<Tensor> gi) {
    ops::scatter_channels_add(g, index, gi[0]);
  });
}

inline Var permute_channels(Var x, const std::vector<std::size_t>& perm) {
  require<ShapeError>(perm.size() == x.value().channels(), "permute_channels: permutation length ", perm.size(),
                      " does not match axis 2 extent ", x.value().channels());
  require(ops::is_permutation(perm), "permute_channels: permutation is not a bijection");
  return gather_channels(x, perm, "permute_channels");
}

inline Var slice_channels(Var x, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> idx(count);
  for (std::size_t j = 0; j < count; ++j) idx[j] = begin + j;
  return gather_channels(x, std::move(idx), "slice_channels");
}

inline Var concat_channels(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  std::vector<const Tensor*> vals;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    vals.push_back(&p.value());
    widths.push_back(p.value().channels());
  }
  Tensor y = ops::concat_channels(vals);
  const std::size_t C = y.channels();
  return parts[0].tape->record(std::move(y), "concat_channels", parts, [widths, C](const Tensor& g, std::span<Tensor> gi) {
    const std::size_t P = g.size() / C;
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t j = 0; j < widths[k]; ++j) gi[k][p * widths[k] + j] = g[p * C + off + j];
      off += widths[k];
    }
  });
}

inline Var add(Var a, Var b) {
  Tensor y = a.value();
  y += b.value();
  return a.tape->record(std::move(y), "add", {a, b}, [](const Tensor& g, std::span<Tensor> gi) {
    gi[0] = g;
    gi[1] = g;
  });
}

inline Var sub(Var a, Var b) {
  require<ShapeError>(a.shape() == b.shape(), "sub: shape ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return a.tape->record(std::move(y), "sub", {a, b}, [](const Tensor& g, std::span<Tensor> gi) {
    gi[0] = g;
    for (std::size_t i = 0; i < g.size(); ++i) gi[1][i] = -g[i];
  });
}

inline Var scale(Var x, double s) {
  Tensor y = x.value();
  y *= s;
  return x.tape->record(std::move(y), "scale", {x}, [s](const Tensor& g, std::span<Tensor> gi) {
    gi[0] = g;
    gi[0] *= s;
  });
}

/// weights[index] * x, with weights a rank-1 tensor on the tape.
inline Var scale_by_element(Var weights, std::size_t index, Var x) {
  require<ShapeError>(weights.value().rank() == 1 && index < weights.value().size(),
                      "scale_by_element: index ", index, " outside weight vector ", shape_str(weights.shape()));
  const double w = weights.value()[index];
  const Tensor* xv = &x.value();
  Tensor y = *xv;
  y *= w;
  return x.tape->record(std::move(y), "scale_by_element", {weights, x}, [w, index, xv](const Tensor& g, std::span<Tensor> gi) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * (*xv)[i];
    gi[0][index] = acc;
    gi[1] = g;
    gi[1] *= w;
  });
}

/// Gradient passes where lo <= x <= hi.
inline Var clamp(Var x, double lo, double hi) {
  const Tensor* xv = &x.value();
  Tensor y = *xv;
  for (double& v : y.data()) v = std::clamp(v, lo, hi);
  return x.tape->record(std::move(y), "clamp", {x}, [xv, lo, hi](const Tensor& g, std::span<Tensor> gi) {
    for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] = ((*xv)[i] >= lo && (*xv)[i] <= hi) ? g[i] : 0.0;
  });
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape->record(Tensor::scalar(s), "sum", {x}, [](const Tensor& g, std::span<Tensor> gi) {
    gi[0].fill(g[0]);
  });
}

inline Var mean(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const double n = static_cast<double>(x.value().size());
  return x.tape->record(Tensor::scalar(s / n), "mean", {x}, [n](const Tensor& g, std::span<Tensor> gi) {
    gi[0].fill(g[0] / n);
  });
}

/// Mean squared difference, a scalar.
inline Var mse(Var a, Var b) {
  require<ShapeError>(a.shape() == b.shape(), "mse: shape ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
  const Tensor* av = &a.value();
  const Tensor* bv = &b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av->size(); ++i) {
    const double d = (*av)[i] - (*bv)[i];
    s += d * d;
  }
  const double n = static_cast<double>(av->size());
  return a.tape->record(Tensor::scalar(s / n), "mse", {a, b}, [av, bv, n](const Tensor& g, std::span<Tensor> gi) {
    const double k = 2.0 * g[0] / n;
    for (std::size_t i = 0; i < av->size(); ++i) {
      const double d = k * ((*av)[i] - (*bv)[i]);
      gi[0][i] = d;
      gi[1][i] = -d;
    }
  });
}

/// Fixed linear spatial resampling (e.g. the bicubic degradation operator).
inline Var resample(Var x, std::shared_ptr<const SpatialResampler> op) {
  Tensor y = op->apply(x.value());
  return x.tape->record(std::move(y), "resample", {x}, [op](const Tensor& g, std::span<Tensor> gi) {
    gi[0] = op->adjoint(g);
  });
}

}  // namespace hsr::ad
