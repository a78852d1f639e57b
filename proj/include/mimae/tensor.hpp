#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mimae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Violated precondition (invalid argument, empty mask, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite value produced by a forward op, or fed into one.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed file content (bad magic, truncation, CRC mismatch, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<int>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> val;
  std::vector<float> grad;  // empty until touched by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // pulls this->grad into parents' grads

  int64_t size() const { return int64_t(val.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(val.size(), 0.0f);
  }
};

}  // namespace detail

// Dense f32 tensor with optional reverse-mode gradient. Value-semantic
// handle; the underlying node (and the op graph hanging off it) is shared.
// Graph links die with the tensors that hold them, so each training step's
// tape is dropped when its temporaries go out of scope.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float v);
  static Tensor scalar(float v);
  static Tensor from_values(Shape shape, std::vector<float> values);
  // leaf with requires_grad=true
  static Tensor param(Shape shape, std::vector<float> values);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const;
  int ndim() const { return int(shape().size()); }
  int dim(int i) const;
  int64_t size() const;

  const std::vector<float>& values() const;
  bool requires_grad() const;
  bool has_grad() const;               // grad storage allocated
  const std::vector<float>& grad() const;  // throws if absent
  std::vector<float> grad_or_zeros() const;
  void zero_grad();
  void materialize_grad();  // allocate zero grad storage (leaf bookkeeping)

  // Leaf-only mutation, used by optimizers and initializers.
  std::vector<float>& mutable_values();

  float item() const;  // size()==1 only

  // Same values, cut from the graph; never requires grad.
  Tensor detach() const;

  detail::Node* node() const { return n_.get(); }
  const std::shared_ptr<detail::Node>& handle() const { return n_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n);

 private:
  std::shared_ptr<detail::Node> n_;
};

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// requires_grad tensor reachable from it; repeated calls (on this or other
// losses sharing leaves) keep accumulating until zero_grad().
void backward(const Tensor& loss);

}  // namespace mimae
