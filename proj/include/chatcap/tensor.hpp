#pragma once

// Dense f64 tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a shared handle to a node holding shape, row-major data and an
// optional gradient buffer. Operations are free functions taking the Tape
// they record onto; an operation is recorded only when the tape is recording
// and at least one input requires a gradient. Tape::backward walks the
// records in reverse and accumulates gradients by summation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chatcap {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;

  std::span<double> grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t row, std::size_t col) const;
  // Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  // Allocates a zero gradient if none is present.
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void clear_grad() { node_->grad.clear(); }

  // Deep copy of the values; the copy is a gradient-free leaf.
  Tensor detach() const;
  std::vector<double> to_vector() const { return node_->data; }

  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return entries_.size(); }
  // Number of recorded operations with the given name.
  std::size_t count(std::string_view op) const;

  void push(std::string_view op, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward closure in
  // reverse order. The tape is consumed; reset() makes it reusable.
  void backward(const Tensor& loss);
  void reset();

 private:
  struct Entry {
    std::string_view op;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool recording_;
  bool consumed_ = false;
};

// ---- linear algebra -------------------------------------------------------

// [m x k] . [k x n] -> [m x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// [m x k] . [k] -> [m]
Tensor matvec(Tape& tape, const Tensor& a, const Tensor& x);
// [k] . [k x n] -> [n], i.e. w^T A
Tensor vecmat(Tape& tape, const Tensor& w, const Tensor& a);
// [m x n] + [m] added to every column.
Tensor add_bias(Tape& tape, const Tensor& m, const Tensor& bias);
Tensor dot(Tape& tape, const Tensor& a, const Tensor& b);

// ---- elementwise ----------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
// Every element of `a` times the single-element tensor `s`.
Tensor scale_by(Tape& tape, const Tensor& a, const Tensor& s);
Tensor relu(Tape& tape, const Tensor& a);
Tensor tanh(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor sum(Tape& tape, const Tensor& a);

// Inverted dropout: kept entries are scaled by 1/(1-rate). rate == 0 is the
// identity and draws nothing from the generator.
Tensor dropout(Tape& tape, const Tensor& a, double rate, std::mt19937_64& rng);

// ---- structural -----------------------------------------------------------

Tensor concat(Tape& tape, std::span<const Tensor> parts);
Tensor slice(Tape& tape, const Tensor& v, std::size_t offset, std::size_t length);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
// [d] -> [d x n], the vector repeated as n columns.
Tensor tile_columns(Tape& tape, const Tensor& v, std::size_t n);
// n vectors of length d -> [d x n].
Tensor stack_columns(Tape& tape, std::span<const Tensor> columns);
// Row `index` of a [n x d] matrix as a [d] vector.
Tensor row(Tape& tape, const Tensor& table, std::size_t index);
// Rows of a [n x d] matrix -> [k x d]. Rows equal to `frozen_row` receive no
// gradient.
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> indices,
                   std::size_t frozen_row = static_cast<std::size_t>(-1));

// ---- reductions / probability ---------------------------------------------

inline constexpr double kCosineEpsilon = 1e-12;

// a.b / (|a||b|); 0 when either norm is <= kCosineEpsilon.
Tensor cosine(Tape& tape, const Tensor& a, const Tensor& b);
// Max-shifted softmax over the unmasked entries; masked entries are exactly 0.
Tensor masked_softmax(Tape& tape, const Tensor& scores, const std::vector<bool>& mask);
Tensor softmax(Tape& tape, const Tensor& scores);
// -log p[gold]
Tensor cross_entropy(Tape& tape, const Tensor& probabilities, std::size_t gold);

}  // namespace chatcap
