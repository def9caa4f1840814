#include "chatcap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "chatcap/error.hpp"

namespace chatcap {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->data.assign(shape_numel(shape), 0.0);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw DimensionError("at(r, c) on non-matrix " + shape_str(shape()));
  return node_->data[r * node_->shape[1] + c];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

Tensor Tensor::detach() const {
  return from(node_->shape, node_->data, false);
}

// ---- tape -----------------------------------------------------------------

std::size_t Tape::count(std::string_view op) const {
  return static_cast<std::size_t>(std::count_if(
      entries_.begin(), entries_.end(), [&](const Entry& e) { return e.op == op; }));
}

void Tape::push(std::string_view op, std::function<void()> backward) {
  if (consumed_) throw UsageError("recording onto a consumed tape; call reset() first");
  entries_.push_back({op, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw UsageError("backward called twice on the same tape");
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  consumed_ = true;
  if (!loss.requires_grad()) return;
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

// ---- helpers --------------------------------------------------------------

namespace {

bool tracks(const Tape& tape, std::initializer_list<const Tensor*> inputs) {
  if (!tape.recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " differ");
  }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_str(a.shape()));
  }
}

// Returns the output handle with requires_grad set when the op is tracked.
Tensor make_output(Shape shape, std::vector<double> data, bool tracked) {
  return Tensor::from(std::move(shape), std::move(data), tracked);
}

}  // namespace

// ---- linear algebra -------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents differ for " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * B[p * n + j];
    }
  }
  const bool tracked = tracks(tape, {&a, &b});
  Tensor result = make_output({m, n}, std::move(out), tracked);
  if (tracked) {
    tape.push("matmul", [an = a.node(), bn = b.node(), on = result.node(), m, k, n] {
      if (on->grad.empty()) return;
      const auto& G = on->grad;
      if (an->requires_grad) {
        auto ga = an->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * bn->data[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (bn->requires_grad) {
        auto gb = bn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = an->data[i * k + p];
            for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
          }
      }
    });
  }
  return result;
}

Tensor matvec(Tape& tape, const Tensor& a, const Tensor& x) {
  require_rank("matvec", a, 2);
  require_rank("matvec", x, 1);
  const std::size_t m = a.dim(0), k = a.dim(1);
  if (x.dim(0) != k) {
    throw DimensionError("matvec: inner extents differ for " + shape_str(a.shape()) + " and " +
                         shape_str(x.shape()));
  }
  std::vector<double> out(m, 0.0);
  const auto A = a.data();
  const auto X = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = A.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) acc += row[p] * X[p];
    out[i] = acc;
  }
  const bool tracked = tracks(tape, {&a, &x});
  Tensor result = make_output({m}, std::move(out), tracked);
  if (tracked) {
    tape.push("matvec", [an = a.node(), xn = x.node(), on = result.node(), m, k] {
      if (on->grad.empty()) return;
      const auto& G = on->grad;
      if (an->requires_grad) {
        auto ga = an->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = G[i];
          if (gi == 0.0) continue;
          double* row = ga.data() + i * k;
          for (std::size_t p = 0; p < k; ++p) row[p] += gi * xn->data[p];
        }
      }
      if (xn->requires_grad) {
        auto gx = xn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = G[i];
          const double* row = an->data.data() + i * k;
          for (std::size_t p = 0; p < k; ++p) gx[p] += gi * row[p];
        }
      }
    });
  }
  return result;
}

Tensor vecmat(Tape& tape, const Tensor& w, const Tensor& a) {
  require_rank("vecmat", w, 1);
  require_rank("vecmat", a, 2);
  const std::size_t k = a.dim(0), n = a.dim(1);
  if (w.dim(0) != k) {
    throw DimensionError("vecmat: inner extents differ for " + shape_str(w.shape()) + " and " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(n, 0.0);
  const auto W = w.data();
  const auto A = a.data();
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) out[j] += W[p] * A[p * n + j];
  const bool tracked = tracks(tape, {&w, &a});
  Tensor result = make_output({n}, std::move(out), tracked);
  if (tracked) {
    tape.push("vecmat", [wn = w.node(), an = a.node(), on = result.node(), k, n] {
      if (on->grad.empty()) return;
      const auto& G = on->grad;
      if (wn->requires_grad) {
        auto gw = wn->grad_buffer();
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += an->data[p * n + j] * G[j];
          gw[p] += acc;
        }
      }
      if (an->requires_grad) {
        auto ga = an->grad_buffer();
        for (std::size_t p = 0; p < k; ++p)
          for (std::size_t j = 0; j < n; ++j) ga[p * n + j] += wn->data[p] * G[j];
      }
    });
  }
  return result;
}

Tensor add_bias(Tape& tape, const Tensor& m, const Tensor& bias) {
  require_rank("add_bias", m, 2);
  require_rank("add_bias", bias, 1);
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  if (bias.dim(0) != rows) {
    throw DimensionError("add_bias: " + shape_str(bias.shape()) + " does not match rows of " +
                         shape_str(m.shape()));
  }
  std::vector<double> out(m.data().begin(), m.data().end());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += bias[i];
  const bool tracked = tracks(tape, {&m, &bias});
  Tensor result = make_output(m.shape(), std::move(out), tracked);
  if (tracked) {
    tape.push("add_bias", [mn = m.node(), bn = bias.node(), on = result.node(), rows, cols] {
      if (on->grad.empty()) return;
      const auto& G = on->grad;
      if (mn->requires_grad) {
        auto gm = mn->grad_buffer();
        for (std::size_t i = 0; i < G.size(); ++i) gm[i] += G[i];
      }
      if (bn->requires_grad) {
        auto gb = bn->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) gb[i] += G[i * cols + j];
      }
    });
  }
  return result;
}

Tensor dot(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("dot", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  const bool tracked = tracks(tape, {&a, &b});
  Tensor result = make_output({1}, {acc}, tracked);
  if (tracked) {
    tape.push("dot", [an = a.node(), bn = b.node(), on = result.node()] {
      if (on->grad.empty()) return;
      const double g = on->grad[0];
      // a and b may be the same node; read values before accumulating.
      if (an->requires_grad) {
        auto ga = an->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bn->data[i];
      }
      if (bn->requires_grad) {
        auto gb = bn->grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * an->data[i];
      }
    });
  }
  return result;
}

// ---- elementwise ----------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  const bool tracked = tracks(tape, {&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    tape.push("add", [an = a.node(), bn = b.node(), on = result.node()] {
      if (on->grad.empty()) return;
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        auto g = n->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
      }
    });
  }
  return result;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  const bool tracked = tracks(tape, {&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    tape.push("sub", [an = a.node(), bn = b.node(), on = result.node()] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        auto g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        auto g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= on->grad[i];
      }
    });
  }
  return result;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  const bool tracked = tracks(tape, {&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    tape.push("mul", [an = a.node(), bn = b.node(), on = result.node()] {
      if (on->grad.empty()) return;
      if (an->requires_grad) {
        auto g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        auto g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * an->data[i];
      }
    });
  }
  return result;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  const bool tracked = tracks(tape, {&a});
  Tensor result = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    tape.push("scale", [an = a.node(), on = result.node(), factor] {
      if (on->grad.empty()) return;
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * factor;
    });
  }
  return result;
}

Tensor scale_by(Tape& tape, const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("scale_by: factor must have one element, got " + shape_str(s.shape()));
  }
  const double factor = s[0];
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  const bool tracked = tracks(tape, {&a, &s});
  Tensor result = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    tape.push("scale_by", [an = a.node(), sn = s.node(), on = result.node()] {
      if (on->grad.empty()) return;
      const auto& G = on->grad;
      if (sn->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < G.size(); ++i) acc += G[i] * an->data[i];
        sn->grad_buffer()[0] += acc;
      }
      if (an->requires_grad) {
        const double factor = sn->data[0];
        auto g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * factor;
      }
    });
  }
  return result;
}

namespace {

// Elementwise unary op whose derivative is expressed through input x and output y.
template <class Forward, class Derivative>
Tensor unary(Tape& tape, std::string_view name, const Tensor& a, Forward f, Derivative df) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  const bool tracked = tracks(tape, {&a});
  Tensor result = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    tape.push(name, [an = a.node(), on = result.node(), df] {
      if (on->grad.empty()) return;
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * df(an->data[i], on->data[i]);
    });
  }
  return result;
}

}  // namespace

Tensor relu(Tape& tape, const Tensor& a) {
  return unary(
      tape, "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(Tape& tape, const Tensor& a) {
  return unary(
      tape, "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary(
      tape, "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor sum(Tape& tape, const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const bool tracked = tracks(tape, {&a});
  Tensor result = make_output({1}, {acc}, tracked);
  if (tracked) {
    tape.push("sum", [an = a.node(), on = result.node()] {
      if (on->grad.empty()) return;
      auto g = an->grad_buffer();
      for (auto& v : g) v += on->grad[0];
    });
  }
  return result;
}

Tensor dropout(Tape& tape, const Tensor& a, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError("dropout rate must be in [0, 1)");
  if (rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> factors(a.numel());
  for (auto& f : factors) f = keep(rng) ? keep_scale : 0.0;
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factors[i];
  const bool tracked = tracks(tape, {&a});
  Tensor result = make_output(a.shape(), std::move(out), tracked);
  if (tracked) {
    tape.push("dropout", [an = a.node(), on = result.node(), factors = std::move(factors)] {
      if (on->grad.empty()) return;
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * factors[i];
    });
  }
  return result;
}

// ---- structural -----------------------------------------------------------

Tensor concat(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  std::vector<double> out;
  bool tracked = false;
  for (const auto& p : parts) {
    require_rank("concat", p, 1);
    out.insert(out.end(), p.data().begin(), p.data().end());
    tracked = tracked || p.requires_grad();
  }
  tracked = tracked && tape.recording();
  const std::size_t total = out.size();
  Tensor result = make_output({total}, std::move(out), tracked);
  if (tracked) {
    std::vector<NodePtr> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) nodes.push_back(p.node());
    tape.push("concat", [nodes = std::move(nodes), on = result.node()] {
      if (on->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& n : nodes) {
        const std::size_t len = n->data.size();
        if (n->requires_grad) {
          auto g = n->grad_buffer();
          for (std::size_t i = 0; i < len; ++i) g[i] += on->grad[offset + i];
        }
        offset += len;
      }
    });
  }
  return result;
}

Tensor slice(Tape& tape, const Tensor& v, std::size_t offset, std::size_t length) {
  require_rank("slice", v, 1);
  if (length == 0 || offset + length > v.numel()) {
    throw DimensionError("slice [" + std::to_string(offset) + ", " +
                         std::to_string(offset + length) + ") out of " + shape_str(v.shape()));
  }
  std::vector<double> out(v.data().begin() + static_cast<std::ptrdiff_t>(offset),
                          v.data().begin() + static_cast<std::ptrdiff_t>(offset + length));
  const bool tracked = tracks(tape, {&v});
  Tensor result = make_output({length}, std::move(out), tracked);
  if (tracked) {
    tape.push("slice", [vn = v.node(), on = result.node(), offset, length] {
      if (on->grad.empty()) return;
      auto g = vn->grad_buffer();
      for (std::size_t i = 0; i < length; ++i) g[offset + i] += on->grad[i];
    });
  }
  return result;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  const bool tracked = tracks(tape, {&a});
  Tensor result = make_output(std::move(shape), std::move(out), tracked);
  if (tracked) {
    tape.push("reshape", [an = a.node(), on = result.node()] {
      if (on->grad.empty()) return;
      auto g = an->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    });
  }
  return result;
}

Tensor tile_columns(Tape& tape, const Tensor& v, std::size_t n) {
  require_rank("tile_columns", v, 1);
  if (n == 0) throw DimensionError("tile_columns: zero columns");
  const std::size_t d = v.dim(0);
  std::vector<double> out(d * n);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = v[i];
  const bool tracked = tracks(tape, {&v});
  Tensor result = make_output({d, n}, std::move(out), tracked);
  if (tracked) {
    tape.push("tile_columns", [vn = v.node(), on = result.node(), d, n] {
      if (on->grad.empty()) return;
      auto g = vn->grad_buffer();
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i] += on->grad[i * n + j];
    });
  }
  return result;
}

Tensor stack_columns(Tape& tape, std::span<const Tensor> columns) {
  if (columns.empty()) throw ContractError("stack_columns of zero tensors");
  const std::size_t d = columns.front().numel();
  const std::size_t n = columns.size();
  std::vector<double> out(d * n);
  bool tracked = false;
  for (std::size_t j = 0; j < n; ++j) {
    require_rank("stack_columns", columns[j], 1);
    if (columns[j].numel() != d) {
      throw DimensionError("stack_columns: column " + std::to_string(j) + " has shape " +
                           shape_str(columns[j].shape()) + ", expected [" + std::to_string(d) +
                           "]");
    }
    for (std::size_t i = 0; i < d; ++i) out[i * n + j] = columns[j][i];
    tracked = tracked || columns[j].requires_grad();
  }
  tracked = tracked && tape.recording();
  Tensor result = make_output({d, n}, std::move(out), tracked);
  if (tracked) {
    std::vector<NodePtr> nodes;
    nodes.reserve(n);
    for (const auto& c : columns) nodes.push_back(c.node());
    tape.push("stack_columns", [nodes = std::move(nodes), on = result.node(), d, n] {
      if (on->grad.empty()) return;
      for (std::size_t j = 0; j < n; ++j) {
        if (!nodes[j]->requires_grad) continue;
        auto g = nodes[j]->grad_buffer();
        for (std::size_t i = 0; i < d; ++i) g[i] += on->grad[i * n + j];
      }
    });
  }
  return result;
}

Tensor row(Tape& tape, const Tensor& table, std::size_t index) {
  require_rank("row", table, 2);
  const std::size_t rows = table.dim(0), d = table.dim(1);
  if (index >= rows) {
    throw BoundsError("row index " + std::to_string(index) + " out of range for " +
                      shape_str(table.shape()));
  }
  std::vector<double> out(table.data().begin() + static_cast<std::ptrdiff_t>(index * d),
                          table.data().begin() + static_cast<std::ptrdiff_t>((index + 1) * d));
  const bool tracked = tracks(tape, {&table});
  Tensor result = make_output({d}, std::move(out), tracked);
  if (tracked) {
    tape.push("row", [tn = table.node(), on = result.node(), index, d] {
      if (on->grad.empty()) return;
      auto g = tn->grad_buffer();
      for (std::size_t i = 0; i < d; ++i) g[index * d + i] += on->grad[i];
    });
  }
  return result;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::size_t> indices,
                   std::size_t frozen_row) {
  require_rank("gather_rows", table, 2);
  if (indices.empty()) throw ContractError("gather_rows with no indices");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<double> out;
  out.reserve(indices.size() * d);
  for (auto idx : indices) {
    if (idx >= rows) {
      throw BoundsError("row index " + std::to_string(idx) + " out of range for " +
                        shape_str(table.shape()));
    }
    auto src = table.data().subspan(idx * d, d);
    out.insert(out.end(), src.begin(), src.end());
  }
  const bool tracked = tracks(tape, {&table});
  Tensor result = make_output({indices.size(), d}, std::move(out), tracked);
  if (tracked) {
    tape.push("gather_rows", [tn = table.node(), on = result.node(),
                              idx = std::vector<std::size_t>(indices.begin(), indices.end()), d,
                              frozen_row] {
      if (on->grad.empty()) return;
      auto g = tn->grad_buffer();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] == frozen_row) continue;
        for (std::size_t i = 0; i < d; ++i) g[idx[r] * d + i] += on->grad[r * d + i];
      }
    });
  }
  return result;
}

// ---- reductions / probability ---------------------------------------------

Tensor cosine(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("cosine", a, 1);
  require_same_shape("cosine", a, b);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const bool degenerate = na <= kCosineEpsilon || nb <= kCosineEpsilon;
  const double c = degenerate ? 0.0 : ab / (na * nb);
  const bool tracked = tracks(tape, {&a, &b});
  Tensor result = make_output({1}, {c}, tracked);
  if (tracked) {
    tape.push("cosine", [an = a.node(), bn = b.node(), on = result.node(), na, nb, c,
                         degenerate] {
      if (on->grad.empty() || degenerate) return;
      const double g = on->grad[0];
      const std::size_t d = an->data.size();
      // d cos / d a = b / (|a||b|) - cos * a / |a|^2
      std::vector<double> ga(d), gb(d);
      for (std::size_t i = 0; i < d; ++i) {
        ga[i] = g * (bn->data[i] / (na * nb) - c * an->data[i] / (na * na));
        gb[i] = g * (an->data[i] / (na * nb) - c * bn->data[i] / (nb * nb));
      }
      if (an->requires_grad) {
        auto buf = an->grad_buffer();
        for (std::size_t i = 0; i < d; ++i) buf[i] += ga[i];
      }
      if (bn->requires_grad) {
        auto buf = bn->grad_buffer();
        for (std::size_t i = 0; i < d; ++i) buf[i] += gb[i];
      }
    });
  }
  return result;
}

Tensor masked_softmax(Tape& tape, const Tensor& scores, const std::vector<bool>& mask) {
  require_rank("masked_softmax", scores, 1);
  const std::size_t n = scores.numel();
  if (mask.size() != n) {
    throw DimensionError("masked_softmax: mask of length " + std::to_string(mask.size()) +
                         " for scores " + shape_str(scores.shape()));
  }
  double max_score = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    any = true;
    max_score = std::max(max_score, scores[i]);
  }
  if (!any) throw InvalidMaskError("masked_softmax: every position is masked");
  std::vector<double> out(n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(scores[i] - max_score);
    total += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) out[i] /= total;
  }
  const bool tracked = tracks(tape, {&scores});
  Tensor result = make_output({n}, std::move(out), tracked);
  if (tracked) {
    tape.push("masked_softmax", [sn = scores.node(), on = result.node(), n] {
      if (on->grad.empty()) return;
      const auto& p = on->data;
      const auto& G = on->grad;
      double inner = 0.0;
      for (std::size_t i = 0; i < n; ++i) inner += p[i] * G[i];
      auto g = sn->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += p[i] * (G[i] - inner);
    });
  }
  return result;
}

Tensor softmax(Tape& tape, const Tensor& scores) {
  return masked_softmax(tape, scores, std::vector<bool>(scores.numel(), true));
}

Tensor cross_entropy(Tape& tape, const Tensor& probabilities, std::size_t gold) {
  require_rank("cross_entropy", probabilities, 1);
  if (gold >= probabilities.numel()) {
    throw ContractError("cross_entropy: gold index " + std::to_string(gold) +
                        " out of range for " + shape_str(probabilities.shape()));
  }
  const double p = probabilities[gold];
  const bool tracked = tracks(tape, {&probabilities});
  Tensor result = make_output({1}, {-std::log(p)}, tracked);
  if (tracked) {
    tape.push("cross_entropy", [pn = probabilities.node(), on = result.node(), gold] {
      if (on->grad.empty()) return;
      pn->grad_buffer()[gold] += -on->grad[0] / pn->data[gold];
    });
  }
  return result;
}

}  // namespace chatcap
