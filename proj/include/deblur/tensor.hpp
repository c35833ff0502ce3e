#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace deblur {

#ifndef DEBLUR_REAL
#define DEBLUR_REAL double
#endif

/// Arithmetic width for every tensor value and gradient, fixed at build time.
using Real = DEBLUR_REAL;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Rounds to the 32-bit storage width used by checkpoints. Parameters, optimizer
/// moments and running statistics are kept at this width so a checkpoint is an
/// exact snapshot of the training state.
inline Real to_storage(Real v) { return static_cast<Real>(static_cast<float>(v)); }

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;
};
}  // namespace detail

/// Reference-counted handle to a dense row-major array.
///
/// Copies share storage. Values produced by operations are never modified
/// afterwards; only leaves (parameters, inputs under gradcheck) are written
/// through `mutable_data()`.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0), bool requires_grad = false);
  Tensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

  static Tensor scalar(Real v, bool requires_grad = false) { return Tensor(Shape{1}, std::vector<Real>{v}, requires_grad); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const Real> data() const { return impl_->data; }
  std::span<Real> mutable_data() { return impl_->data; }
  Real operator[](std::size_t i) const { return impl_->data[i]; }
  /// Value of a single-element tensor.
  Real item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const Real> grad() const { return impl_->grad; }
  /// Gradient buffer, zero-allocated on first access.
  std::span<Real> grad_mut();
  void clear_grad() { impl_->grad.clear(); impl_->grad.shrink_to_fit(); }

  /// New leaf with a copy of the values and no gradient history.
  Tensor detach() const;
  /// Same values, different shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Identity of the underlying storage, for tape bookkeeping.
  const void* id() const { return impl_.get(); }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Flat offset of (n, c, y, x) in an NCHW tensor.
inline std::size_t nchw_index(const Shape& s, std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
  return ((n * s[1] + c) * s[2] + y) * s[3] + x;
}

}  // namespace deblur
