#include "ppmae/numerics/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ppmae::nx {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
std::atomic<bool> g_finite_checks{true};
thread_local bool t_grad_enabled = true;

NodePtr new_node(Shape shape, std::vector<double> values) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
  if (nx::numel(shape) != values.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  node_ = new_node(std::move(shape), std::move(values));
  node_->tracked = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = nx::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = nx::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

std::size_t Tensor::size(int axis) const {
  const int d = static_cast<int>(dim());
  if (axis < 0) axis += d;
  if (axis < 0 || axis >= d) throw ShapeError("axis out of range for " + to_string(shape()));
  return node_->shape[static_cast<std::size_t>(axis)];
}

std::span<double> Tensor::mutable_values() {
  if (!node_->leaf) throw AutodiffError("in-place mutation of a non-leaf tensor");
  return node_->value;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->value, false); }

Tensor Tensor::from_node(NodePtr node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }
void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }

FiniteCheckScope::FiniteCheckScope(bool enabled) : previous_(finite_checks_enabled()) {
  set_finite_checks(enabled);
}
FiniteCheckScope::~FiniteCheckScope() { set_finite_checks(previous_); }

namespace detail {

Tensor make_result(const char* kind, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, std::function<void(Node&)> rule) {
  if (finite_checks_enabled()) {
    for (double v : values) {
      if (!std::isfinite(v)) throw NumericError(std::string("non-finite output in ") + kind);
    }
  }
  auto n = new_node(std::move(shape), std::move(values));
  if (t_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.node()->tracked;
    if (any) {
      n->tracked = true;
      n->leaf = false;
      n->inputs.reserve(inputs.size());
      for (auto& in : inputs) n->inputs.push_back(in.node());
      n->backward_rule = std::move(rule);
    }
  }
  return Tensor::from_node(std::move(n));
}

}  // namespace detail

void backward(const Tensor& loss) {
  if (!loss.defined()) throw AutodiffError("backward on an undefined tensor");
  const NodePtr& root = loss.node();
  if (!root->tracked) throw AutodiffError("backward called on an untracked tensor");
  if (root->value.size() != 1) {
    throw AutodiffError("backward needs a scalar loss, got shape " + to_string(root->shape));
  }
  if (root->consumed) throw AutodiffError("computation record already consumed by backward");

  // Iterative post-order DFS over tracked nodes gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->tracked && !visited.count(child)) {
        if (child->consumed) {
          throw AutodiffError("computation record already consumed by backward");
        }
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
    if (!n->leaf) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_rule) n->backward_rule(*n);
  }

  for (Node* n : order) {
    if (n->leaf) continue;
    n->backward_rule = nullptr;
    n->inputs.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->consumed = true;
  }
}

}  // namespace ppmae::nx
