#pragma once

// Dense row-major tensors and a define-by-run gradient tape.
//
// A Tensor is a shared handle to a node holding its shape, values and
// (lazily allocated) gradient. Operations in ops.hpp record a backward
// closure on the thread's active GradientTape whenever at least one operand
// requires a gradient. Calling GradientTape::backward replays the closures in
// exact reverse order of recording and then clears the tape.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lano {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return values().size(); }

  std::span<T> values();
  std::span<const T> values() const;
  T& operator[](std::size_t i) { return node_->value[i]; }
  const T& operator[](std::size_t i) const { return node_->value[i]; }
  /// Value of a single-element tensor.
  T item() const;

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  /// Marks a leaf as trainable. Only leaves should be toggled this way.
  Tensor& set_requires_grad(bool flag);
  /// Gradient buffer; allocated as zeros if nothing has been accumulated.
  std::span<T> grad();
  std::span<const T> grad() const;
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }
  void zero_grad();

  /// Deep copy of the values with no link to any tape.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered record of primitive operations and their vector-Jacobian closures.
template <typename T>
class GradientTape {
 public:
  GradientTape() = default;
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  void record(std::string_view op, std::function<void()> backward);
  std::size_t size() const noexcept { return entries_.size(); }
  std::string_view op_name(std::size_t i) const { return entries_[i].op; }

  /// Seeds d(loss)/d(loss) = 1, replays every closure in reverse recording
  /// order, then clears the tape. The loss must be a tape-attached scalar.
  void backward(const Tensor<T>& loss);
  void clear() { entries_.clear(); }

  /// Tape recording on the calling thread, or nullptr.
  static GradientTape* active() noexcept { return active_; }

 private:
  template <typename>
  friend class TapeScope;

  struct Entry {
    std::string_view op;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  static thread_local GradientTape* active_;
};

/// Activates a tape (or none, for nullptr) on this thread for the lifetime of
/// the scope and restores the previous one afterwards.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(GradientTape<T>* tape) : previous_(GradientTape<T>::active_) {
    GradientTape<T>::active_ = tape;
  }
  explicit TapeScope(GradientTape<T>& tape) : TapeScope(&tape) {}
  ~TapeScope() { GradientTape<T>::active_ = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradientTape<T>* previous_;
};

template <typename T>
using NoGradScope = TapeScope<T>;

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class GradientTape<float>;
extern template class GradientTape<double>;

}  // namespace lano
