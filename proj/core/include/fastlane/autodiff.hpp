#pragma once

// Define-by-run reverse-mode automatic differentiation over f64 tensors.
//
// A Tape records one node per op in creation order, which is a topological
// order by construction. backward(root) walks the tape once from the root
// down to the first node. Parameters live outside the tape and survive across
// steps; Tape::leaf() binds one into the graph and backward() accumulates
// into Parameter::grad.

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "fastlane/tensor.hpp"

namespace fastlane {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool requires_grad = true;

  void zero_grad() { grad.fill(0.0); }
};

// Owns named parameters with stable addresses, iterated in insertion order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor init, bool requires_grad = true);
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_values() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Binds `p` into the graph. Repeated calls on one tape return the same node.
  Var leaf(Parameter& p);
  // Rows of `p` (an embedding table) without binding the whole table; the
  // backward pass scatters straight into p.grad.
  Var gather(Parameter& p, const std::vector<std::size_t>& rows);

  // With grad disabled, no backward closures are retained (inference mode).
  void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  // Reverse sweep from a scalar root. Node gradients are recomputed on every
  // call; Parameter::grad accumulates across calls until zeroed.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient of the last backward() w.r.t. node `v` (zeros if it got none).
  Tensor grad(Var v) const;
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Op-author interface.
  Var record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);
  // Upstream gradient of node `id` during the reverse sweep.
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }
  // Gradient accumulator for an input; allocated lazily as zeros.
  Tensor& grad_buffer(std::size_t id);

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    std::vector<std::size_t> rows;  // gather nodes: source rows of param
    bool gathered = false;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> leaves_;
  bool grad_enabled_ = true;
};

namespace ad {

// Rank-1 tensors are treated as a single row by the row-wise ops.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// a: [r x c], bias: [c]; adds bias to every row.
Var add_row(Var a, Var bias);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

Var sum(Var a);
// axis 0 sums over rows -> [cols]; axis 1 sums over columns -> [rows].
Var sum_axis(Var a, int axis);
Var dot(Var a, Var b);

Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var gelu(Var a);
Var relu(Var a);

// Along the last axis (per row for rank 2), with max subtraction.
Var softmax(Var a);
// Per row unit L2 norm. Zero rows stay zero.
Var l2_normalize_rows(Var a);
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// a / sum(a) for a rank-1 tensor with positive sum.
Var normalize_sum(Var a);

struct MaxResult {
  Var value;
  std::vector<std::size_t> argmax;
};
// axis 0: max over rows per column -> [cols]; axis 1: per row -> [rows].
MaxResult max_axis(Var a, int axis);
// For a: [r x C] and column segment offsets (size S+1, offsets[0] == 0,
// offsets[S] == C), returns [r x S] with the max of each row inside each
// segment. Every segment must be non-empty.
Var segment_max_cols(Var a, const std::vector<std::size_t>& offsets);

Var gather_rows(Var a, const std::vector<std::size_t>& rows);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

Var stop_gradient(Var a);

// Mean negative log-likelihood of `target` under softmax(logits); logits [n].
Var cross_entropy(Var logits, std::size_t target);

}  // namespace ad

}  // namespace fastlane
