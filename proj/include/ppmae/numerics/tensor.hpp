#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// Every op that receives a tracked input produces a tracked node holding its
// inputs and a backward rule. The nodes reachable from a loss form its
// computation record; backward() orders that record topologically, replays
// the rules in reverse and then releases it, so a record can only be
// consumed once.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppmae::nx {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an op produces NaN/Inf while finite checks are on.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool tracked = false;
  bool leaf = true;
  bool consumed = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_rule;
};

using NodePtr = std::shared_ptr<Node>;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size(int axis) const;
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  // In-place access for leaves (optimizer updates, finite-difference probes).
  std::span<double> mutable_values();
  std::span<const double> grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return node_->tracked; }
  double item() const;
  // Untracked copy of the current values.
  Tensor detach() const;
  std::uint64_t id() const { return node_->id; }

  const NodePtr& node() const { return node_; }
  static Tensor from_node(NodePtr node);

 private:
  NodePtr node_;
};

// Computes d(loss)/d(leaf) for every tracked leaf reachable from `loss`,
// accumulating into the leaves' grad buffers, then consumes the record.
void backward(const Tensor& loss);

bool grad_enabled();

// Disables recording on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool finite_checks_enabled();
void set_finite_checks(bool enabled);

class FiniteCheckScope {
 public:
  explicit FiniteCheckScope(bool enabled);
  ~FiniteCheckScope();
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;

 private:
  bool previous_;
};

namespace detail {

// Builds an op result. When recording is on and some input is tracked the
// result is tracked and `rule` is attached; otherwise `rule` is dropped.
Tensor make_result(const char* kind, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, std::function<void(Node&)> rule);

inline bool needs_grad(const NodePtr& n) { return n->tracked; }

}  // namespace detail

}  // namespace ppmae::nx
