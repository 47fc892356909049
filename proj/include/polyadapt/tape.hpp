#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "polyadapt/tensor.hpp"

namespace polyadapt {

// A named model tensor. Frozen parameters enter the tape as constants, so no
// gradient is ever produced for them.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  bool tracked() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using ParamGrads = std::vector<std::pair<const Parameter*, Tensor>>;

// Reverse-mode differentiation record. Nodes are appended in evaluation
// order, so walking them backwards is a reverse topological traversal.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  Var param(const Parameter& p);

  // Seeds d(loss) = seed and propagates. The loss must be 1 x 1.
  void backward(Var loss, double seed = 1.0);

  // Gradient of a tracked node after backward(); zeros if nothing flowed in.
  Tensor grad(Var v) const;
  ParamGrads param_grads() const;

  std::size_t size() const { return nodes_.size(); }
  std::size_t allocated_grads() const;

  // Op authoring interface.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  const Tensor& grad_out(std::size_t id) const { return nodes_[id].grad; }
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    bool has_grad = false;
    const Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

// Differentiable primitives. All operate on 2-D values (rows x cols).
namespace ad {

Var matmul(Var a, Var b);
Var matmul_bt(Var a, Var b);              // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_bias(Var x, Var bias);            // x: m x n, bias: 1 x n
Var mul_col(Var x, Var col);              // x: m x n, col: m x 1; row i scaled by col[i]
Var repeat_rows(Var row, std::size_t m);  // 1 x n -> m x n
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t start, std::size_t len);
Var rowdot(Var a, Var b);                 // m x n, m x n -> m x 1
Var transpose(Var a);
Var gelu(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var softmax_rows(Var x);
Var gather_rows(Var table, std::span<const int> ids);
Var sum(Var x);
Var mean(Var x);
Var linear(Var x, Var w, Var b);          // x * w + b

// Word-level cross entropy averaged over unmasked rows.
Var cross_entropy(Var logits, std::span<const int> gold, const std::vector<bool>& mask);
// Mean over rows of the Shannon entropy (nats) of softmax(row).
Var mean_row_entropy(Var logits);

}  // namespace ad

}  // namespace polyadapt
