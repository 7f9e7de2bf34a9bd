#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scpc/error.hpp"

namespace scpc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<float>> storage;
  std::vector<float> grad;  // empty unless tracked and touched
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(storage->size(), 0.0f);
  }
};
}  // namespace detail

// Dense row-major float32 array. Copies are shallow handles; use clone() for
// a deep copy. A tensor that requires grad is tracked by the active Tape.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->storage->size(); }

  std::span<const float> data() const { return *impl_->storage; }
  std::span<float> mutable_data() { return *impl_->storage; }
  float item() const;
  float at(std::size_t flat) const { return (*impl_->storage)[flat]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  std::span<float> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  Tensor detach() const;
  // Shares the value buffer but owns a separate gradient buffer; used to
  // give worker threads private gradients over common parameters.
  Tensor alias_with_fresh_grad() const;

  bool same_storage(const Tensor& other) const { return impl_->storage == other.impl_->storage; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;

  std::shared_ptr<detail::TensorImpl> impl_;
};

// Records differentiable operations executed on the current thread while it is
// active. Backward replays the record once, in reverse order.
class Tape {
public:
  using BackwardFn = std::function<void(std::span<const float> grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Thread-local active tape, or nullptr.
  static Tape* active();

  // Creates the output tensor of an op. When a tape is active and any input is
  // tracked, the output is tracked and `fn` is recorded as its backward rule.
  static Tensor record(Shape shape, std::vector<float> values,
                       std::initializer_list<const Tensor*> inputs, BackwardFn fn);
  static Tensor record(Shape shape, std::vector<float> values,
                       const std::vector<const Tensor*>& inputs, BackwardFn fn);

  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

private:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// Makes a tape active on this thread for the lifetime of the scope.
class TapeScope {
public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape* previous_;
};

// Backpropagates from a scalar loss through the active tape.
void backward(const Tensor& loss);

// Adds `values` into the gradient buffer of `t` (allocating it on first use).
void accumulate_grad(const Tensor& t, std::span<const float> values);

// Throws NumericError if any value is NaN or infinite.
void check_finite(std::span<const float> values, const char* what);

}  // namespace scpc
