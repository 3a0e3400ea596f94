#pragma once

// Reverse-mode differentiation over the primitives in tensor.hpp.
//
// A Tape owns every value produced during one forward pass. Operations append
// nodes in execution order; backward() walks them in reverse. Nodes whose
// inputs do not require gradients record no backward closure, so inference
// through a tape costs only the stored activations.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "arta/tensor.hpp"

namespace arta {

struct Var {
  static constexpr std::uint32_t kNone = 0xffffffffu;
  std::uint32_t id = kNone;
  bool valid() const { return id != kNone; }
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::uint32_t self)>;

  Var constant(Tensor value);
  Var parameter(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Gradient of the last backward() loss with respect to v; zeros when v was
  // not reachable.
  Tensor grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and propagates. The loss must hold one element.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // --- used by operation implementations ---
  Var record(Tensor value, std::initializer_list<Var> inputs, Backprop backprop);
  Var record(Tensor value, std::span<const Var> inputs, Backprop backprop);
  // Mutable gradient buffer of node `id`, allocated (zeroed) on first use.
  Tensor& grad_buffer(std::uint32_t id);
  const Tensor& grad_of(std::uint32_t id) const { return nodes_[id].grad; }
  const Tensor& value_of(std::uint32_t id) const { return nodes_[id].value; }
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backprop backprop;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

namespace ops {

Var matmul(Tape& t, Var a, Var b);
Var linear(Tape& t, Var x, Var w, Var bias);
Var add(Tape& t, Var a, Var b);
Var add_row(Tape& t, Var x, Var row);
Var gelu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps);
Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads, const Neighborhoods& nb);
Var gather_rows(Tape& t, Var x, std::vector<std::int64_t> index);
Var concat_rows(Tape& t, std::span<const Var> parts);
Var concat_cols(Tape& t, Var a, Var b);
Var slice_rows(Tape& t, Var x, std::size_t begin, std::size_t count);
Var scale(Tape& t, Var x, double factor);

// Scalar reductions used by losses.
Var sum(Tape& t, Var x);
Var sum_squares(Tape& t, Var x);
Var add_scalars(Tape& t, Var a, Var b);

// Mean of (pred − target)² over entries with mask != 0; 0 when nothing is
// valid. pred and target have equal element counts.
Var masked_mse(Tape& t, Var pred, std::span<const double> target,
               std::span<const std::uint8_t> mask);

// Mean softmax cross-entropy over rows whose label is ≥ 0; 0 when none.
Var cross_entropy(Tape& t, Var logits, std::span<const std::int32_t> labels);

}  // namespace ops

}  // namespace arta
