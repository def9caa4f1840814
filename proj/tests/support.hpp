#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "chatcap/tensor.hpp"

namespace chatcap::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double bound = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> data(shape_numel(shape));
  for (auto& x : data) x = u(rng);
  return Tensor::from(std::move(shape), std::move(data), requires_grad);
}

// Builds a scalar from `leaves` on the given tape.
using ScalarFn = std::function<Tensor(Tape&)>;

// Largest elementwise |analytic - numeric| / max(|analytic|, |numeric|, floor)
// over all leaves, numeric by central differences.
inline double max_fd_error(const ScalarFn& f, std::vector<Tensor> leaves, double h = 1e-5, double floor = 1e-6) {
  for (auto& l : leaves) l.clear_grad();
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto& leaf : leaves) {
    std::vector<double> analytic(leaf.numel(), 0.0);
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
    auto data = leaf.mutable_data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double x = data[k];
      data[k] = x + h;
      Tape p(false);
      const double fp = f(p).item();
      data[k] = x - h;
      Tape m(false);
      const double fm = f(m).item();
      data[k] = x;
      const double numeric = (fp - fm) / (2 * h);
      worst = std::max(worst, std::abs(analytic[k] - numeric) /
                                  std::max({std::abs(analytic[k]), std::abs(numeric), floor}));
    }
    leaf.clear_grad();
  }
  return worst;
}

inline double sum_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace chatcap::testing
