#pragma once

// Tape-based reverse-mode automatic differentiation over dense matrices.
//
// Nodes are appended to the tape in evaluation order, so the tape is already a
// topological order and backward() is a single reverse sweep. Binary
// elementwise ops broadcast an operand that is 1×1, 1×n (row) or m×1 (column).

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "smorm/tensor.hpp"

namespace smorm::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Mat& value() const;
  double scalar() const;  // value of a 1×1 node
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self, const Mat& grad_out)>;

  Var leaf(Mat value, bool requires_grad = true);
  Var constant(Mat value) { return leaf(std::move(value), false); }
  Var scalar(double v) { return constant(Mat(1, 1, v)); }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }
  // Zero-filled matrix when the node received no gradient.
  Mat grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Reverse sweep from a 1×1 node; throws NotScalar otherwise.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // Hash of every discrete branch taken by piecewise ops (relu sign, min
  // choice, clamp region). Finite-difference checks use it to detect kinks.
  std::uint64_t branch_signature() const noexcept { return signature_; }
  void record_branch(unsigned branch) noexcept {
    signature_ = (signature_ ^ (branch + 1)) * 0x100000001b3ULL;
  }

  Var push(Mat value, std::vector<std::size_t> parents, BackwardFn backward);
  void accumulate(std::size_t id, const Mat& g);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
};

// Shape-preserving elementwise / linear ops.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
Var tanh(Var a);
Var relu(Var a);
Var exp(Var a);
Var square(Var a);
Var softplus(Var a);    // log(1 + e^x), overflow-stable
Var log_sigmoid(Var a); // -softplus(-x)
Var minimum(Var a, Var b);
Var clamp(Var a, double lo, double hi);
Var softmax_rows(Var a);

// Reductions and slicing.
Var sum(Var a);       // → 1×1
Var mean(Var a);      // → 1×1
Var sum_cols(Var a);  // m×n → m×1
Var mean_cols(Var a); // m×n → m×1
Var slice_rows(Var a, std::size_t begin, std::size_t count);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Named parameter tensors with a fixed insertion order.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Mat>;

  void add(std::string name, Mat value);
  bool contains(const std::string& name) const;
  Mat& at(const std::string& name);
  const Mat& at(const std::string& name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count() const;
  bool congruent(const ParamStore& other) const;
  ParamStore zeros_like() const;
  bool all_finite() const;

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  // Linear view over all coordinates in store order.
  double& coord(std::size_t flat_index);

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<Entry> entries_;
};

// Gradients share the ParamStore layout: same names, same shapes.
using Gradient = ParamStore;

// Parameters placed on a tape.
class BoundParams {
 public:
  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Var>>& vars() const { return vars_; }
  void add(std::string name, Var v) { vars_.emplace_back(std::move(name), v); }

 private:
  std::vector<std::pair<std::string, Var>> vars_;
};

BoundParams bind(Tape& tape, const ParamStore& params, bool requires_grad = true);

// Gradient of every bound parameter after Tape::backward; parameters that did
// not participate get zeros.
Gradient collect_gradient(const Tape& tape, const BoundParams& bound, const ParamStore& like);

}  // namespace smorm::ad
