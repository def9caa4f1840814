#include "chatcap/optim.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <set>

#include "chatcap/error.hpp"

namespace chatcap {

Tensor ParamStore::add(std::string name, Tensor tensor, std::string_view group) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name " + name);
  tensor.set_requires_grad(true);
  entries_.push_back({std::move(name), std::string(group), tensor});
  return tensor;
}

Tensor ParamStore::add_zeros(std::string name, Shape shape, std::string_view group) {
  return add(std::move(name), Tensor::zeros(std::move(shape)), group);
}

Tensor ParamStore::add_uniform(std::string name, Shape shape, std::mt19937_64& rng,
                               std::string_view group) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.back()));
  return add_uniform(std::move(name), std::move(shape), bound, rng, group);
}

Tensor ParamStore::add_uniform(std::string name, Shape shape, double bound, std::mt19937_64& rng,
                               std::string_view group) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return add(std::move(name), t, group);
}

const Tensor& ParamStore::get(std::string_view name) const {
  const Tensor* t = find(name);
  if (t == nullptr) throw ContractError("unknown parameter " + std::string(name));
  return *t;
}

const Tensor* ParamStore::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

void ParamStore::clear_grads() {
  for (auto& e : entries_) e.tensor.clear_grad();
}

void ParamStore::materialize_grads() {
  for (auto& e : entries_) e.tensor.mutable_grad();
}

std::vector<ParamGroup> ParamStore::groups(
    const std::map<std::string, double, std::less<>>& lr) const {
  std::vector<ParamGroup> out;
  for (const auto& e : entries_) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ParamGroup& g) { return g.name == e.group; });
    if (it == out.end()) {
      auto rate = lr.find(e.group);
      if (rate == lr.end()) throw ContractError("no learning rate for parameter group " + e.group);
      out.push_back({e.group, {}, rate->second});
      it = std::prev(out.end());
    }
    it->params.push_back({e.name, e.tensor});
  }
  return out;
}

void adam_step(std::span<ParamGroup> groups, AdamState& state) {
  std::set<std::string, std::less<>> seen;
  for (const auto& group : groups) {
    if (!(group.lr > 0.0)) throw ContractError("group " + group.name + " has non-positive lr");
    for (const auto& p : group.params) {
      if (!seen.insert(p.name).second) {
        throw ContractError("parameter " + p.name + " appears in more than one group");
      }
      if (!p.tensor.has_grad()) throw ContractError("parameter " + p.name + " has no gradient");
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);

  for (auto& group : groups) {
    for (auto& p : group.params) {
      const std::size_t n = p.tensor.numel();
      auto& moments = state.moments[p.name];
      if (moments.first.size() != n) {
        moments.first.assign(n, 0.0);
        moments.second.assign(n, 0.0);
      }
      auto theta = p.tensor.mutable_data();
      auto g = p.tensor.grad();
      for (std::size_t i = 0; i < n; ++i) {
        moments.first[i] = state.beta1 * moments.first[i] + (1.0 - state.beta1) * g[i];
        moments.second[i] = state.beta2 * moments.second[i] + (1.0 - state.beta2) * g[i] * g[i];
        const double m_hat = moments.first[i] / correction1;
        const double v_hat = moments.second[i] / correction2;
        theta[i] -= group.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
      }
      p.tensor.clear_grad();
    }
  }
}

}  // namespace chatcap
