#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace xel {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

namespace detail {

struct Storage {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;

  /// Zero-initialized gradient buffer, allocated on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient.
///
/// Copies share storage (handle semantics); use clone() for a deep copy.
/// Rank-1 tensors of shape {k} behave as k x 1 columns in matrix code.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  std::span<double> data();
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);

  bool has_grad() const;
  std::span<const double> grad() const;
  void clear_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

  detail::Storage& storage() const { return *storage_; }
  const std::shared_ptr<detail::Storage>& storage_ptr() const { return storage_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Storage> s) : storage_(std::move(s)) {}
  std::shared_ptr<detail::Storage> storage_;
};

/// Ordered record of differentiable operations.
///
/// Nodes are appended as operations execute, so recording order is a
/// topological order. backward() replays them in reverse exactly once; a
/// consumed tape must be reset() before it records again.
class Tape {
 public:
  /// Local gradient rule. Receives dLoss/dOutput and accumulates into inputs.
  using Rule = std::function<void(std::span<const double> grad_out)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// True when an op over `inputs` must be recorded.
  bool wants(std::initializer_list<const Tensor*> inputs) const;
  bool wants(std::span<const Tensor> inputs) const;

  void record(const Tensor& output, Rule rule);

  void backward(const Tensor& loss);
  void reset();

 private:
  struct Node {
    std::shared_ptr<detail::Storage> output;
    Rule rule;
  };
  std::vector<Node> nodes_;
  bool recording_ = true;
  bool consumed_ = false;
};

}  // namespace xel
