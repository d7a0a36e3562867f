#include "lano/tensor.hpp"

#include <sstream>

#include "lano/error.hpp"

namespace lano {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<Node>()) {
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not match buffer of " +
                     std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw ValueError("tensor: access to undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     shape_string(s));
  }
  return s[axis];
}

template <typename T>
std::span<T> Tensor<T>::values() {
  if (!node_) throw ValueError("tensor: access to undefined tensor");
  return node_->value;
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  if (!node_) throw ValueError("tensor: access to undefined tensor");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("tensor: item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  if (!node_) throw ValueError("tensor: access to undefined tensor");
  node_->requires_grad = flag;
  return *this;
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (!node_) throw ValueError("tensor: access to undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!node_) throw ValueError("tensor: access to undefined tensor");
  node_->ensure_grad();
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node_->value);
}

template <typename T>
thread_local GradientTape<T>* GradientTape<T>::active_ = nullptr;

template <typename T>
void GradientTape<T>::record(std::string_view op, std::function<void()> backward) {
  entries_.push_back(Entry{op, std::move(backward)});
}

template <typename T>
void GradientTape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " +
                     (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw ValueError("backward: loss is not attached to the gradient tape");
  }
  auto& node = *loss.node();
  node.ensure_grad();
  node.grad[0] += T(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
  entries_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class GradientTape<float>;
template class GradientTape<double>;

}  // namespace lano
