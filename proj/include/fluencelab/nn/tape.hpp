// Copyright 2026 The FluenceLab Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode autodiff over per-sample feature maps.
//
// Nodes are appended in evaluation order, so walking them backwards is a
// valid topological order. Parameters are not nodes: ops read them from the
// store and accumulate their gradients into a Gradients buffer during the
// backward sweep.

#pragma once

#include <deque>
#include <functional>

#include "fluencelab/nn/tensor.hpp"

namespace fluencelab::nn {

class Tape {
 public:
  using Id = std::size_t;
  using Backward = std::function<void(Tape&, Gradients&)>;

  explicit Tape(const ParamStore& params, bool recording = true) : params_(&params), recording_(recording) {}

  const ParamStore& params() const { return *params_; }
  bool recording() const { return recording_; }

  /// Leaf value. Gradients reach it only when `requires_grad` is set.
  Id input(Tensor t, bool requires_grad = false) {
    nodes_.push_back({std::move(t), Tensor(), Backward(), requires_grad});
    return nodes_.size() - 1;
  }

  /// Records an op result. `back` reads grad(self) and accumulates into the
  /// grads of its inputs; dropped when not recording.
  Id push(Tensor value, Backward back) {
    nodes_.push_back({std::move(value), Tensor(), recording_ ? std::move(back) : Backward(), true});
    return nodes_.size() - 1;
  }

  const Tensor& value(Id id) const { return nodes_[id].value; }
  Tensor take(Id id) { return std::move(nodes_[id].value); }

  /// Gradient buffer of a node, allocated on first use.
  Tensor& grad(Id id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.c, n.value.h, n.value.w);
    return n.grad;
  }
  bool has_grad(Id id) const { return !nodes_[id].grad.empty(); }
  bool requires_grad(Id id) const { return recording_ && nodes_[id].requires_grad; }

  /// Seeds d(loss)/d(out) and sweeps back, accumulating parameter gradients.
  void backward(Id out, const Tensor& seed, Gradients& into) {
    if (!recording_) throw ConfigError("backward on a non-recording tape");
    if (!seed.same_shape(nodes_[out].value)) throw ConfigError("backward seed shape mismatch");
    grad(out) = seed;
    for (Id i = out + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.back && !n.grad.empty()) n.back(*this, into);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward back;
    bool requires_grad;
  };
  const ParamStore* params_;
  bool recording_;
  std::deque<Node> nodes_;  // stable references while ops append
};

}  // namespace fluencelab::nn
