#include "deblur/tensor.hpp"

#include <sstream>

#include "deblur/error.hpp"

namespace deblur {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ')';
  return os.str();
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (std::size_t d : shape)
    if (d == 0) throw DimensionError("tensor dimension must be positive, got " + shape_to_string(shape));
}
}  // namespace

Tensor::Tensor(Shape shape, Real fill, bool requires_grad) : impl_(std::make_shared<detail::TensorImpl>()) {
  check_shape(shape);
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<Real> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  check_shape(shape);
  if (shape_numel(shape) != data.size())
    throw DimensionError("shape " + shape_to_string(shape) + " holds " + std::to_string(shape_numel(shape)) +
                         " elements, data has " + std::to_string(data.size()));
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Real Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
  return impl_->data[0];
}

std::span<Real> Tensor::grad_mut() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel())
    throw DimensionError("cannot reshape " + shape_to_string(this->shape()) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), impl_->data, false);
}

}  // namespace deblur
