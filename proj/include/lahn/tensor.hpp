#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lahn/error.hpp"

namespace lahn::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// Tensor is a shared handle: copies refer to the same storage, which is what
/// lets parameters accumulate gradients across every use in a graph. Use
/// clone() or detach() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    if (numel(shape) != values.size()) {
      throw DimensionError("tensor shape " + to_string(shape) + " holds " +
                           std::to_string(numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("zero-sized dimension in " + to_string(shape));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{}, {v}, requires_grad);
  }

  static Tensor vector(std::vector<double> v, bool requires_grad = false) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v), requires_grad);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v,
                       bool requires_grad = false) {
    return Tensor(Shape{rows, cols}, std::move(v), requires_grad);
  }

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t size() const { return impl_->values.size(); }

  std::span<const double> values() const { return impl_->values; }
  std::span<double> mutable_values() { return impl_->values; }
  const std::vector<double>& data() const { return impl_->values; }

  double item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
    return impl_->values[0];
  }
  double operator[](std::size_t i) const { return impl_->values[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->values[r * dim(1) + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) const { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }

  /// Gradient buffer, allocated as zeros on first access.
  std::span<double> grad_buffer() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), 0.0);
    return impl_->grad;
  }

  void zero_grad() const { impl_->grad.clear(); }

  /// Copy of the values with no gradient linkage.
  Tensor detach() const { return Tensor(shape(), impl_->values, false); }

  /// Deep copy preserving requires_grad but not the gradient.
  Tensor clone() const { return Tensor(shape(), impl_->values, requires_grad()); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Ordered record of differentiable operations for one forward pass.
///
/// Ops only record when at least one input requires a gradient, so pure
/// evaluation paths leave the tape empty. backward() replays the record in
/// reverse, visiting every node once.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& output)>;

  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  enum class Mode { Record, NoGrad };

  Tape() = default;
  explicit Tape(Mode mode) : recording_(mode == Mode::Record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Builds an op result. `backward` reads output.grad() and accumulates into
  /// the grad_buffer() of each input that requires a gradient.
  Tensor record(std::string op, std::vector<Tensor> inputs, Shape shape,
                std::vector<double> values, BackwardFn backward) {
    bool needs_grad = false;
    if (recording_) {
      for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
    }
    Tensor out(std::move(shape), std::move(values), needs_grad);
    if (needs_grad) {
      nodes_.push_back(Node{std::move(op), std::move(inputs), out, std::move(backward)});
    }
    return out;
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor.
  void backward(Tensor loss) {
    if (loss.size() != 1) {
      throw DimensionError("backward() needs a scalar loss, got " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) return;
    loss.grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output.has_grad()) continue;
      for (auto& in : it->inputs) {
        if (in.requires_grad()) in.grad_buffer();
      }
      it->backward(it->output);
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
  bool recording_ = true;
};

}  // namespace lahn::ad
