#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lipemo {

#ifdef LIPEMO_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<real> value;
  std::vector<real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad();
};

// Dense row-major tensor with an optional reverse-mode autograd record.
// Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = 0);
  Tensor(Shape shape, std::vector<real> values);

  static Tensor parameter(Shape shape, std::vector<real> values);
  static Tensor scalar(real v) { return Tensor({1}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->value.size(); }

  std::span<real> values() { return node_->value; }
  std::span<const real> values() const { return node_->value; }
  std::span<const real> grad() const { return node_->grad; }
  std::span<real> grad_mut() {
    node_->ensure_grad();
    return node_->grad;
  }
  real item() const;
  real operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Reverse pass from a single-element tensor. Releases the recorded graph.
  void backward() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {
// Builds an op result; records `backward` only when grad mode is on and some
// input requires grad.
Tensor make_op(Shape shape, std::vector<real> value, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward);
}  // namespace detail

}  // namespace lipemo
