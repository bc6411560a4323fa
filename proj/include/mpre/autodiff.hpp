#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mpre/tensor.hpp"

namespace mpre::ad {

class Tape;

// Handle to a node on a tape. Only meaningful while the tape is alive.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

// Propagates the gradient of node `self` into the gradients of its inputs.
using BackwardFn = std::function<void(Tape& tape, std::size_t self)>;

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
// so every input id is smaller than the id of its consumer and a single
// reverse sweep is a valid topological traversal.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter tensor. backward() adds into param.grad.
  Var parameter(Tensor& param);

  Var record(std::string_view op, std::vector<std::size_t> inputs, Shape shape,
             std::vector<double> values, BackwardFn backward);

  // Reverse accumulation from a scalar node. Gradients of bound parameters
  // are accumulated (not overwritten), so callers zero them beforehand.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const Shape& shape(Var v) const { return nodes_[v.id].shape; }
  std::span<const double> values(Var v) const { return nodes_[v.id].values; }
  std::span<const double> values(std::size_t id) const { return nodes_[id].values; }
  std::span<const double> grad(std::size_t id) const { return grads_[id]; }
  std::span<double> grad_mut(std::size_t id) { return grads_[id]; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  // Gradient of the last backward() with respect to a node.
  std::span<const double> grad(Var v) const { return grads_[v.id]; }
  Tensor value_tensor(Var v) const;

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Shape shape;
    std::vector<double> values;
    BackwardFn backward;
    Tensor* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
};

// Primitives. All shapes are checked; violations raise ShapeError naming the
// primitive and the offending shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // Hadamard product
Var scale(Var a, double s);
Var add_scalar(Var a, Var bias);          // bias has one element, broadcast
Var matvec(Var w, Var x);                 // [r x c] * [c] -> [r]
Var weighted_rows(Var x, Var w);          // [r x n], [r] -> [n] = w^T x
Var concat(std::span<const Var> parts);   // along the last axis, equal row counts
Var tanh(Var a);
Var softmax(Var a);                       // 1-D, max-subtracted
Var slice(Var a, std::size_t begin, std::size_t length);  // 1-D
Var diff(Var a);                          // 1-D first-order difference
Var sum(Var a);                           // -> scalar
Var nll(Var probs, std::size_t label, double clamp);  // -log(max(p[label], clamp))

// Softmax of raw values with max-subtraction; shared by the primitive and
// non-differentiable callers.
std::vector<double> softmax_values(std::span<const double> logits);

// Builds the loss on a fresh tape. Must register parameters via
// Tape::parameter so their gradients can be compared.
using LossFn = std::function<Var(Tape&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

// Compares reverse-mode gradients against central differences on
// `sample_count` randomly drawn scalar parameters.
GradCheckResult finite_diff_check(const LossFn& loss_fn, std::span<Tensor* const> params,
                                  std::size_t sample_count, double step, std::uint64_t seed,
                                  std::span<const std::string> names = {});

}  // namespace mpre::ad
