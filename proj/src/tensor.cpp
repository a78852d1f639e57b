#include "mimae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace mimae {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<float> values) {
  if (numel(shape) != int64_t(values.size()))
    throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->val = std::move(values);
  return n;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
  auto n = int64_t(numel(shape));
  return wrap(new_node(std::move(shape), std::vector<float>(size_t(n), 0.0f)));
}

Tensor Tensor::full(Shape shape, float v) {
  auto n = int64_t(numel(shape));
  return wrap(new_node(std::move(shape), std::vector<float>(size_t(n), v)));
}

Tensor Tensor::scalar(float v) { return from_values({}, {v}); }

Tensor Tensor::from_values(Shape shape, std::vector<float> values) {
  return wrap(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::param(Shape shape, std::vector<float> values) {
  Tensor t = from_values(std::move(shape), std::move(values));
  t.n_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const {
  if (!n_) throw ContractError("tensor: undefined handle");
  return n_->shape;
}

int Tensor::dim(int i) const {
  const Shape& s = shape();
  if (i < 0 || size_t(i) >= s.size())
    throw DimensionError("tensor: dim index " + std::to_string(i) + " out of range for " + shape_str(s));
  return s[size_t(i)];
}

int64_t Tensor::size() const {
  if (!n_) throw ContractError("tensor: undefined handle");
  return n_->size();
}

const std::vector<float>& Tensor::values() const {
  if (!n_) throw ContractError("tensor: undefined handle");
  return n_->val;
}

bool Tensor::requires_grad() const { return n_ && n_->requires_grad; }

bool Tensor::has_grad() const { return n_ && !n_->grad.empty(); }

const std::vector<float>& Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor: gradient not populated");
  return n_->grad;
}

std::vector<float> Tensor::grad_or_zeros() const {
  if (!n_) throw ContractError("tensor: undefined handle");
  if (!n_->grad.empty()) return n_->grad;
  return std::vector<float>(n_->val.size(), 0.0f);
}

void Tensor::zero_grad() {
  if (n_) n_->grad.clear();
}

void Tensor::materialize_grad() {
  if (!n_) throw ContractError("tensor: undefined handle");
  n_->ensure_grad();
}

std::vector<float>& Tensor::mutable_values() {
  if (!n_) throw ContractError("tensor: undefined handle");
  if (n_->backprop)
    throw ContractError("tensor: in-place mutation is restricted to leaves");
  return n_->val;
}

float Tensor::item() const {
  if (size() != 1) throw ContractError("tensor: item() requires a scalar, got " + shape_str(shape()));
  return n_->val[0];
}

Tensor Tensor::detach() const {
  if (!n_) throw ContractError("tensor: undefined handle");
  auto n = std::make_shared<detail::Node>();
  n->shape = n_->shape;
  n->val = n_->val;
  return wrap(std::move(n));
}

Tensor Tensor::wrap(std::shared_ptr<detail::Node> n) {
  Tensor t;
  t.n_ = std::move(n);
  return t;
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  detail::Node* root = loss.node();
  if (!root->requires_grad) return;  // nothing reachable carries grad

  // Iterative post-order DFS over parent edges; reversed post-order is a
  // topological order, so each node's grad is complete before it propagates.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    bool descended = false;
    while (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
        descended = true;
        break;
      }
    }
    if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
      order.push_back(stack.back().first);
      stack.pop_back();
    }
  }

  // Interior nodes recompute their gradient from scratch each sweep; any
  // grads they already carry are stashed and folded back afterwards, so
  // repeated sweeps accumulate without compounding through the interior.
  std::vector<std::pair<detail::Node*, std::vector<float>>> stashed;
  for (detail::Node* node : order)
    if (node->backprop && !node->grad.empty()) {
      stashed.emplace_back(node, std::move(node->grad));
      node->grad.clear();
    }

  root->ensure_grad();
  root->grad[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    node->ensure_grad();
    if (node->backprop) node->backprop(*node);
  }

  for (auto& [node, old] : stashed)
    for (size_t i = 0; i < old.size(); ++i) node->grad[i] += old[i];
}

}  // namespace mimae
