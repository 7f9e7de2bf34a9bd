#include "scpc/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace scpc {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<float> values) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = std::make_shared<std::vector<float>>(std::move(values));
  return impl;
}

thread_local Tape* g_active_tape = nullptr;

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  std::vector<float> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  Tensor t(make_impl(std::move(shape), std::move(values)));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(float value) { return from({1}, {value}); }

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return (*impl_->storage)[0];
}

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (on) {
    impl_->ensure_grad();
  } else {
    impl_->grad.clear();
  }
}

std::span<float> Tensor::mutable_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
  Tensor t = from(impl_->shape, *impl_->storage, impl_->requires_grad);
  if (!impl_->grad.empty()) t.impl_->grad = impl_->grad;
  return t;
}

Tensor Tensor::detach() const { return from(impl_->shape, *impl_->storage, false); }

Tensor Tensor::alias_with_fresh_grad() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->storage = impl_->storage;
  Tensor t(std::move(impl));
  t.set_requires_grad(impl_->requires_grad);
  return t;
}

Tape* Tape::active() { return g_active_tape; }

Tensor Tape::record(Shape shape, std::vector<float> values,
                    std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  return record(std::move(shape), std::move(values), std::vector<const Tensor*>(inputs), std::move(fn));
}

Tensor Tape::record(Shape shape, std::vector<float> values, const std::vector<const Tensor*>& inputs,
                    BackwardFn fn) {
  check_finite(values, "forward result");
  Tensor out(make_impl(std::move(shape), std::move(values)));
  Tape* tape = g_active_tape;
  if (tape == nullptr) return out;
  bool tracked = false;
  for (const Tensor* in : inputs) tracked = tracked || in->requires_grad();
  if (!tracked) return out;
  if (tape->consumed_) throw TapeError("recording onto a tape that was already replayed");
  out.impl_->requires_grad = true;
  tape->entries_.push_back({out.impl_, std::move(fn)});
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("backward called twice on the same tape");
  if (!loss.defined() || loss.numel() != 1) {
    throw TapeError("backward requires a scalar loss");
  }
  if (!loss.requires_grad()) throw TapeError("loss is not on a live tape");
  consumed_ = true;
  loss.impl()->ensure_grad();
  loss.impl()->grad[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->fn(it->output->grad);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw TapeError("backward without an active tape");
  tape->backward(loss);
}

void accumulate_grad(const Tensor& t, std::span<const float> values) {
  auto& impl = *t.impl();
  impl.ensure_grad();
  if (values.size() != impl.grad.size()) throw DimensionError("gradient size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) impl.grad[i] += values[i];
}

void check_finite(std::span<const float> values, const char* what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

}  // namespace scpc
