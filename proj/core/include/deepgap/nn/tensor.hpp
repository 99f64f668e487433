#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace deepgap::nn {

using Shape = std::vector<std::size_t>;

/// Value and gradient storage. Over-aligned so that vectorized kernels see
/// the same alignment, and hence the same summation order, on every run.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  Buffer value;
  Buffer grad;  // empty until first needed
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) {
      grad.assign(value.size(), 0.0);
    }
  }
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient.
///
/// Tensors are handles: copies share storage. Operations on tensors that
/// require gradients record themselves so that backward() can later walk
/// the graph in reverse.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor from_buffer(Shape shape, Buffer values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  explicit operator bool() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<double> data() { return node_->value; }
  std::span<const double> data() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Gradient storage, allocated as zeros on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  const std::string& name() const { return node_->name; }
  Tensor& set_name(std::string name) {
    node_->name = std::move(name);
    return *this;
  }

  /// The single value of a size-1 tensor.
  double item() const;

  /// Independent copy of the values, detached from any graph.
  Tensor clone() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// True unless a NoGradGuard is active on this thread.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse-mode pass from a size-1 tensor. Intermediate gradients are
/// recomputed on each call; gradients of leaf tensors accumulate, so call
/// zero_grad() between steps. Throws ShapeError for a non-scalar loss.
void backward(const Tensor& loss);

}  // namespace deepgap::nn
