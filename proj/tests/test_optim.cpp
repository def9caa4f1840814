#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chatcap/error.hpp"
#include "chatcap/optim.hpp"

using namespace chatcap;

namespace {

std::vector<ParamGroup> one_group(const ParamStore& store, double lr = 1e-3) {
  return store.groups({{std::string(kMainGroup), lr}, {std::string(kWordVectorGroup), lr}});
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamStore store;
  Tensor p = store.add("p", Tensor::vector({0.5, -1.25, 3}));
  p.mutable_grad();
  auto groups = one_group(store);
  AdamState state;
  adam_step(groups, state);
  EXPECT_EQ(p.to_vector(), (std::vector<double>{0.5, -1.25, 3}));
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, SingleScalarStepMatchesClosedForm) {
  ParamStore store;
  Tensor p = store.add("theta", Tensor::vector({0.0}));
  p.mutable_grad()[0] = 1.0;
  auto groups = one_group(store);
  AdamState state;
  adam_step(groups, state);
  const double m = (1 - 0.9) * 1.0, v = (1 - 0.999) * 1.0;
  const double m_hat = m / (1 - 0.9), v_hat = v / (1 - 0.999);
  EXPECT_DOUBLE_EQ(p[0], -1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8));
}

TEST(Adam, TwoStepsMatchClosedForm) {
  ParamStore store;
  Tensor p = store.add("theta", Tensor::vector({0.2}));
  auto groups = one_group(store, 0.01);
  AdamState state;
  const double grads[2] = {0.5, -2.0};
  double theta = 0.2, m = 0, v = 0;
  for (int t = 1; t <= 2; ++t) {
    p.mutable_grad()[0] = grads[t - 1];
    adam_step(groups, state);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    theta -= 0.01 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p[0], theta, 1e-15);
  }
}

TEST(Adam, GroupLearningRatesScaleUpdates) {
  ParamStore store;
  Tensor a = store.add("a", Tensor::vector({1.0}));
  Tensor b = store.add("b", Tensor::vector({1.0}), kWordVectorGroup);
  a.mutable_grad()[0] = 0.3;
  b.mutable_grad()[0] = 0.3;
  auto groups = store.groups({{std::string(kMainGroup), 1e-3}, {std::string(kWordVectorGroup), 1e-4}});
  ASSERT_EQ(groups.size(), 2u);
  AdamState state;
  adam_step(groups, state);
  EXPECT_NEAR((a[0] - 1.0) / (b[0] - 1.0), 10.0, 1e-9);
}

TEST(Adam, ClearsGradientsAfterStep) {
  ParamStore store;
  Tensor p = store.add("p", Tensor::vector({1, 2}));
  p.mutable_grad()[1] = 4.0;
  auto groups = one_group(store);
  AdamState state;
  adam_step(groups, state);
  EXPECT_FALSE(p.has_grad());
}

TEST(Adam, MissingGradientNamesParameter) {
  ParamStore store;
  store.add("lonely", Tensor::vector({1}));
  auto groups = one_group(store);
  AdamState state;
  try {
    adam_step(groups, state);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos);
  }
}

TEST(Adam, RejectsNonPositiveLearningRate) {
  ParamStore store;
  store.add("p", Tensor::vector({1})).mutable_grad();
  auto groups = one_group(store, 0.0);
  AdamState state;
  EXPECT_THROW(adam_step(groups, state), ContractError);
}

TEST(Adam, OrderWithinGroupDoesNotMatter) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  ParamStore s1, s2;
  std::vector<double> x(4), g(4);
  for (auto& v : x) v = u(rng);
  for (auto& v : g) v = u(rng);
  Tensor a1 = s1.add("a", Tensor::vector({x[0], x[1]})), b1 = s1.add("b", Tensor::vector({x[2], x[3]}));
  Tensor b2 = s2.add("b", Tensor::vector({x[2], x[3]})), a2 = s2.add("a", Tensor::vector({x[0], x[1]}));
  AdamState st1, st2;
  for (int step = 0; step < 3; ++step) {
    for (Tensor* t : {&a1, &a2}) {
      t->mutable_grad()[0] = g[0] * (step + 1);
      t->mutable_grad()[1] = g[1];
    }
    for (Tensor* t : {&b1, &b2}) {
      t->mutable_grad()[0] = g[2];
      t->mutable_grad()[1] = g[3] - step;
    }
    auto g1 = one_group(s1), g2 = one_group(s2);
    adam_step(g1, st1);
    adam_step(g2, st2);
  }
  EXPECT_EQ(a1.to_vector(), a2.to_vector());
  EXPECT_EQ(b1.to_vector(), b2.to_vector());
}

TEST(Adam, ConstantGradientStepBound) {
  ParamStore store;
  Tensor p = store.add("p", Tensor::vector({0.0, 0.0, 0.0}));
  auto groups = one_group(store, 1e-3);
  AdamState state;
  const double g[3] = {1e-3, 5.0, -300.0};
  for (int step = 0; step < 50; ++step) {
    const auto before = p.to_vector();
    for (int k = 0; k < 3; ++k) p.mutable_grad()[k] = g[k];
    adam_step(groups, state);
    for (int k = 0; k < 3; ++k) EXPECT_LE(std::abs(p[k] - before[k]), 1e-3 * (1 + 1e-8));
  }
}

TEST(ParamStore, RejectsDuplicatesAndMaterializes) {
  ParamStore store;
  store.add("w", Tensor::vector({1}));
  EXPECT_THROW(store.add("w", Tensor::vector({2})), ContractError);
  EXPECT_FALSE(store.get("w").has_grad());
  store.materialize_grads();
  EXPECT_TRUE(store.get("w").has_grad());
  EXPECT_EQ(store.total_elements(), 1u);
}
