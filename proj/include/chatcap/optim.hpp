#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chatcap/tensor.hpp"

namespace chatcap {

inline constexpr std::string_view kMainGroup = "main";
inline constexpr std::string_view kWordVectorGroup = "wordvec";

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Ordered, named collection of trainable leaves. Every entry carries the
// name of the optimizer group it belongs to.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::string group;
    Tensor tensor;
  };

  Tensor add(std::string name, Tensor tensor, std::string_view group = kMainGroup);
  Tensor add_zeros(std::string name, Shape shape, std::string_view group = kMainGroup);
  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = last extent.
  Tensor add_uniform(std::string name, Shape shape, std::mt19937_64& rng,
                     std::string_view group = kMainGroup);
  Tensor add_uniform(std::string name, Shape shape, double bound, std::mt19937_64& rng,
                     std::string_view group = kMainGroup);

  const Tensor& get(std::string_view name) const;
  const Tensor* find(std::string_view name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  void clear_grads();
  // Gives every parameter without a gradient an explicit zero gradient, for
  // parameters the current loss does not reach.
  void materialize_grads();

  // One group per distinct group name, in first-seen order.
  std::vector<struct ParamGroup> groups(const std::map<std::string, double, std::less<>>& lr) const;

 private:
  std::vector<Entry> entries_;
};

struct ParamGroup {
  std::string name;
  std::vector<NamedTensor> params;
  double lr = 1e-3;
};

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::map<std::string, AdamMoments, std::less<>> moments;
};

// One bias-corrected Adam update of every parameter in every group, then
// clears the gradients. Throws ContractError when a parameter has no
// gradient, appears twice, or a group's learning rate is not positive.
void adam_step(std::span<ParamGroup> groups, AdamState& state);

}  // namespace chatcap
