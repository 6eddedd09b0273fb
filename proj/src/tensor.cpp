#include "lipemo/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "lipemo/errors.hpp"

namespace lipemo {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidInput("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

void Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), real(0));
}

Tensor::Tensor(Shape shape, real fill) : node_(std::make_shared<Node>()) {
  node_->value.assign(numel(shape), fill);
  node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<real> values) : node_(std::make_shared<Node>()) {
  if (values.size() != numel(shape))
    throw InvalidInput("tensor value count does not match shape " + shape_str(shape));
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

Tensor Tensor::parameter(Shape shape, std::vector<real> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

real Tensor::item() const {
  if (size() != 1) throw InvalidInput("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<Node>();
  n->shape = node_->shape;
  n->value = node_->value;
  return Tensor(std::move(n));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

void Tensor::backward() const {
  if (size() != 1) throw InvalidInput("backward() needs a single-element tensor");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] += real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
      n->grad.clear();
    }
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

Tensor make_op(Shape shape, std::vector<real> value, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward) {
  Tensor out(std::move(shape), std::move(value));
  if (!g_grad_enabled) return out;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  Node& n = *out.node();
  n.requires_grad = true;
  for (auto& t : inputs) n.parents.push_back(t.node());
  n.backward = std::move(backward);
  return out;
}

}  // namespace detail
}  // namespace lipemo
