#include "xel/tensor.hpp"

#include <numeric>
#include <sstream>

#include "xel/errors.hpp"

namespace xel {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t element_count(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  std::size_t n = 1;
  for (auto s : shape) {
    if (s == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
    n *= s;
  }
  return n;
}

}  // namespace

std::vector<double>& detail::Storage::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  auto s = std::make_shared<detail::Storage>();
  const auto n = element_count(shape);
  s->shape = std::move(shape);
  s->value.assign(n, value);
  return Tensor(std::move(s));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  const auto n = element_count(shape);
  if (values.size() != n) {
    throw DimensionError("shape " + shape_string(shape) + " needs " + std::to_string(n) +
                         " values, got " + std::to_string(values.size()));
  }
  auto s = std::make_shared<detail::Storage>();
  s->shape = std::move(shape);
  s->value = std::move(values);
  return Tensor(std::move(s));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return storage_->shape; }
std::size_t Tensor::size() const { return storage_->value.size(); }
std::size_t Tensor::rows() const { return storage_->shape[0]; }
std::size_t Tensor::cols() const {
  const auto& s = storage_->shape;
  return s.size() > 1 ? s[1] : 1;
}

std::span<const double> Tensor::data() const { return storage_->value; }
std::span<double> Tensor::data() { return storage_->value; }

double Tensor::at(std::size_t r, std::size_t c) const { return storage_->value[r * cols() + c]; }

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return storage_->value[0];
}

bool Tensor::requires_grad() const { return storage_ && storage_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  storage_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return storage_ && !storage_->grad.empty(); }
std::span<const double> Tensor::grad() const { return storage_->grad; }
void Tensor::clear_grad() { storage_->grad.clear(); }

Tensor Tensor::clone() const {
  auto s = std::make_shared<detail::Storage>(*storage_);
  return Tensor(std::move(s));
}

bool Tape::wants(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

bool Tape::wants(std::span<const Tensor> inputs) const {
  if (!recording_) return false;
  for (const Tensor& t : inputs)
    if (t.requires_grad()) return true;
  return false;
}

void Tape::record(const Tensor& output, Rule rule) {
  if (consumed_) throw TapeError("cannot record on a consumed tape; call reset() first");
  output.storage().requires_grad = true;
  nodes_.push_back(Node{output.storage_ptr(), std::move(rule)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw TapeError("backward() called twice on the same tape without reset()");
  if (loss.size() != 1) {
    throw TapeError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) throw TapeError("loss was not produced by recorded operations");

  auto& seed = loss.storage().grad_buffer();
  seed[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->rule(it->output->grad);
  }
  consumed_ = true;
  nodes_.clear();
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace xel
