#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "chatcap/error.hpp"
#include "chatcap/lstm.hpp"
#include "chatcap/optim.hpp"
#include "chatcap/tensor.hpp"
#include "support.hpp"

using namespace chatcap;
using chatcap::testing::max_fd_error;
using chatcap::testing::random_tensor;

namespace {

// Weighted sum with fixed random weights, so that gradient errors in any
// single output element are visible.
Tensor weighted(Tape& tape, const Tensor& t, const Tensor& weights) {
  return sum(tape, mul(tape, reshape(tape, t, {t.numel()}), weights));
}

double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(Tensor, FactoriesCheckShapes) {
  EXPECT_THROW(Tensor::zeros({2, 0}), DimensionError);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.at(1, 2), 6.0);
}

TEST(Tensor, MatmulIdentity) {
  Tape tape;
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(matmul(tape, eye, m).to_vector(), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Tensor, MatmulProjector) {
  Tape tape;
  Tensor p = Tensor::from({2, 2}, {1, 0, 0, 0});
  Tensor v = Tensor::from({2, 1}, {5, 7});
  EXPECT_EQ(matmul(tape, p, v).to_vector(), (std::vector<double>{5, 0}));
}

TEST(Tensor, MatmulShapeMismatchNamesShapes) {
  Tape tape;
  try {
    matmul(tape, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos) << e.what();
  }
}

TEST(Tensor, MatmulGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tensor w = random_tensor({6}, rng, 1.0, false);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, matmul(t, a, b), w); }, {a, b}), 1e-6);
}

TEST(Tensor, LinearOpsGradients) {
  std::mt19937_64 rng(2);
  Tensor m = random_tensor({3, 4}, rng), x = random_tensor({4}, rng), y = random_tensor({3}, rng);
  Tensor a = random_tensor({5}, rng), b = random_tensor({5}, rng), s = random_tensor({1}, rng);
  Tensor w3 = random_tensor({3}, rng, 1.0, false), w4 = random_tensor({4}, rng, 1.0, false);
  Tensor w5 = random_tensor({5}, rng, 1.0, false), w12 = random_tensor({12}, rng, 1.0, false);
  Tensor w10 = random_tensor({10}, rng, 1.0, false);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, matvec(t, m, x), w3); }, {m, x}), 1e-6);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, vecmat(t, y, m), w4); }, {m, y}), 1e-6);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, add_bias(t, m, y), w12); }, {m, y}), 1e-6);
  EXPECT_LE(max_fd_error([&](Tape& t) { return dot(t, a, b); }, {a, b}), 1e-6);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, add(t, a, b), w5); }, {a, b}), 1e-6);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, sub(t, a, b), w5); }, {a, b}), 1e-6);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, scale(t, a, -2.5), w5); }, {a}), 1e-6);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, scale_by(t, a, s), w5); }, {a, s}), 1e-6);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, tile_columns(t, y, 4), w12); }, {y}), 1e-6);
  EXPECT_LE(max_fd_error(
                [&](Tape& t) {
                  std::vector<Tensor> parts{a, b};
                  return weighted(t, concat(t, parts), w10);
                },
                {a, b}),
            1e-6);
  Tensor w3b = random_tensor({3}, rng, 1.0, false);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, slice(t, a, 1, 3), w3b); }, {a}), 1e-6);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, row(t, m, 2), w4); }, {m}), 1e-6);
  EXPECT_LE(max_fd_error(
                [&](Tape& t) {
                  std::vector<Tensor> cols{a, b};
                  return weighted(t, stack_columns(t, cols), w10);
                },
                {a, b}),
            1e-6);
}

TEST(Tensor, NonlinearOpsGradients) {
  std::mt19937_64 rng(3);
  Tensor a = random_tensor({6}, rng, 2.0), b = random_tensor({6}, rng, 2.0);
  Tensor w = random_tensor({6}, rng, 1.0, false);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, mul(t, a, b), w); }, {a, b}), 1e-4);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, tanh(t, a), w); }, {a}), 1e-4);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, sigmoid(t, a), w); }, {a}), 1e-4);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, relu(t, a), w); }, {a}), 1e-4);
  EXPECT_LE(max_fd_error([&](Tape& t) { return cosine(t, a, b); }, {a, b}), 1e-4);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, softmax(t, a), w); }, {a}), 1e-4);
  EXPECT_LE(max_fd_error([&](Tape& t) { return weighted(t, masked_softmax(t, a, {true, false, true, true, false, true}), w); },
                         {a}),
            1e-4);
  EXPECT_LE(max_fd_error([&](Tape& t) { return cross_entropy(t, softmax(t, a), 2); }, {a}), 1e-4);
}

TEST(Tensor, GatherRowsGradientAndFrozenRow) {
  std::mt19937_64 rng(4);
  Tensor table = random_tensor({5, 3}, rng);
  const std::vector<std::size_t> idx{4, 1, 4, 0};
  Tensor w = random_tensor({12}, rng, 1.0, false);
  Tape tape;
  Tensor loss = weighted(tape, gather_rows(tape, table, idx, 0), w);
  tape.backward(loss);
  // Row 4 is gathered twice: its gradient is the sum of both weight slices.
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_DOUBLE_EQ(table.grad()[4 * 3 + c], w[0 * 3 + c] + w[2 * 3 + c]);
    EXPECT_DOUBLE_EQ(table.grad()[1 * 3 + c], w[1 * 3 + c]);
    EXPECT_EQ(table.grad()[0 * 3 + c], 0.0);  // frozen
    EXPECT_EQ(table.grad()[2 * 3 + c], 0.0);  // untouched
  }
}

TEST(Tensor, GatherRowsOutOfRange) {
  Tape tape;
  const std::vector<std::size_t> idx{3};
  EXPECT_THROW(gather_rows(tape, Tensor::zeros({3, 2}), idx), BoundsError);
}

TEST(MaskedSoftmax, Symmetric) {
  Tape tape;
  EXPECT_EQ(masked_softmax(tape, Tensor::vector({0, 0}), {true, true}).to_vector(), (std::vector<double>{0.5, 0.5}));
}

TEST(MaskedSoftmax, SingleLivePosition) {
  Tape tape;
  EXPECT_EQ(masked_softmax(tape, Tensor::vector({3.7, 1e6}), {true, false}).to_vector(),
            (std::vector<double>{1.0, 0.0}));
}

TEST(MaskedSoftmax, DirectFormula) {
  Tape tape;
  const auto p = masked_softmax(tape, Tensor::vector({1, 2, 3}), {true, true, true}).to_vector();
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], std::exp(i + 1.0) / z, 1e-15);
}

TEST(MaskedSoftmax, AllMaskedIsAnError) {
  Tape tape;
  EXPECT_THROW(masked_softmax(tape, Tensor::vector({1, 2}), {false, false}), InvalidMaskError);
}

TEST(MaskedSoftmax, ProbabilityVectorProperty) {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 9;
    Tensor s = random_tensor({n}, rng, 50.0, false);
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = coin(rng);
    mask[trial % n] = true;
    Tape tape;
    const auto p = masked_softmax(tape, s, mask).to_vector();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(p[i], 0.0);
      if (!mask[i]) EXPECT_EQ(p[i], 0.0);
      total += p[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(Cosine, SelfSimilarityAndOrthogonality) {
  Tape tape;
  EXPECT_NEAR(cosine(tape, Tensor::vector({0.3, -2, 5}), Tensor::vector({0.3, -2, 5})).item(), 1.0, 1e-15);
  EXPECT_EQ(cosine(tape, Tensor::vector({1, 0}), Tensor::vector({0, 1})).item(), 0.0);
}

TEST(Cosine, DirectFormula) {
  Tape tape;
  const double expected = (4 + 10 + 18) / (std::sqrt(14.0) * std::sqrt(77.0));
  EXPECT_NEAR(cosine(tape, Tensor::vector({1, 2, 3}), Tensor::vector({4, 5, 6})).item(), expected, 1e-15);
}

TEST(Cosine, ZeroNormGivesZeroAndZeroGradient) {
  Tensor a = Tensor::vector({0, 0, 0}, true), b = Tensor::vector({1, 2, 3}, true);
  Tape tape;
  Tensor c = cosine(tape, a, b);
  EXPECT_EQ(c.item(), 0.0);
  tape.backward(c);
  for (double g : a.grad()) EXPECT_EQ(g, 0.0);
  for (double g : b.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Cosine, DimensionMismatch) {
  Tape tape;
  EXPECT_THROW(cosine(tape, Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), DimensionError);
}

TEST(CrossEntropy, GoldOutOfRange) {
  Tape tape;
  EXPECT_THROW(cross_entropy(tape, Tensor::vector({0.5, 0.5}), 2), ContractError);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::zeros({2, 3}, true);
  Tape tape;
  tape.backward(sum(tape, x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareOfThree) {
  Tensor x = Tensor::vector({3}, true);
  Tape tape;
  tape.backward(dot(tape, x, x));
  EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor x = Tensor::vector({1, 2}, true);
  Tape tape;
  Tensor y = scale(tape, x, 2.0);
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, SecondBackwardIsUsageError) {
  Tensor x = Tensor::vector({1, 2}, true);
  Tape tape;
  Tensor y = sum(tape, x);
  tape.backward(y);
  EXPECT_TRUE(tape.consumed());
  EXPECT_THROW(tape.backward(y), UsageError);
  tape.reset();
  EXPECT_FALSE(tape.consumed());
}

TEST(Backward, SharedInputAccumulates) {
  Tensor x = Tensor::vector({1.5, -2}, true);
  Tape tape;
  Tensor y = sum(tape, add(tape, mul(tape, x, x), x));  // x^2 + x
  tape.backward(y);
  EXPECT_EQ(x.grad()[0], 2 * 1.5 + 1);
  EXPECT_EQ(x.grad()[1], 2 * -2.0 + 1);
}

TEST(Backward, LinearityOfGradients) {
  std::mt19937_64 rng(6);
  Tensor a = random_tensor({4}, rng), b = random_tensor({4}, rng);
  auto f1 = [&](Tape& t) { return sum(t, tanh(t, mul(t, a, b))); };
  auto f2 = [&](Tape& t) { return cosine(t, a, b); };
  std::vector<double> g1a, g2a, gsa;
  {
    Tape t;
    t.backward(f1(t));
    g1a.assign(a.grad().begin(), a.grad().end());
    a.clear_grad();
    b.clear_grad();
  }
  {
    Tape t;
    t.backward(f2(t));
    g2a.assign(a.grad().begin(), a.grad().end());
    a.clear_grad();
    b.clear_grad();
  }
  Tape t;
  t.backward(add(t, f1(t), f2(t)));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a.grad()[i], g1a[i] + g2a[i], 1e-14);
}

TEST(Tape, RecordsOnlyWhenNeeded) {
  Tensor c = Tensor::vector({1, 2});
  Tensor v = Tensor::vector({1, 2}, true);
  Tape tape;
  add(tape, c, c);
  EXPECT_EQ(tape.size(), 0u);
  add(tape, c, v);
  EXPECT_EQ(tape.size(), 1u);
  EXPECT_EQ(tape.count("add"), 1u);
  Tape off(false);
  add(off, v, v);
  EXPECT_EQ(off.size(), 0u);
}

TEST(Tape, ForwardIsDeterministic) {
  std::mt19937_64 rng(7);
  Tensor m = random_tensor({4, 4}, rng), x = random_tensor({4}, rng);
  Tape t1, t2;
  EXPECT_EQ(softmax(t1, tanh(t1, matvec(t1, m, x))).to_vector(), softmax(t2, tanh(t2, matvec(t2, m, x))).to_vector());
}

TEST(Dropout, ZeroRateIsIdentity) {
  std::mt19937_64 rng(8);
  Tensor a = Tensor::vector({1, 2, 3});
  Tape tape;
  EXPECT_TRUE(dropout(tape, a, 0.0, rng).same_node(a));
}

TEST(Dropout, InvertedScaling) {
  std::mt19937_64 rng(9);
  Tensor a = Tensor::vector(std::vector<double>(1000, 1.0));
  Tape tape;
  for (double x : dropout(tape, a, 0.5, rng).data()) EXPECT_TRUE(x == 0.0 || x == 2.0);
}

// ---- LSTM cell ------------------------------------------------------------

TEST(Lstm, ZeroParametersGiveZeroState) {
  LstmParams p;
  p.input_dim = 3;
  p.hidden_dim = 2;
  p.w_input = Tensor::zeros({8, 3});
  p.w_hidden = Tensor::zeros({8, 2});
  p.bias = Tensor::zeros({8});
  Tape tape;
  LstmState s = lstm_cell(tape, Tensor::vector({1, -2, 3}), LstmState::zeros(2), p);
  EXPECT_EQ(s.h.to_vector(), (std::vector<double>{0, 0}));
  EXPECT_EQ(s.c.to_vector(), (std::vector<double>{0, 0}));
}

TEST(Lstm, HandSetStepMatchesScalarGates) {
  std::mt19937_64 rng(10);
  LstmParams p;
  p.input_dim = 2;
  p.hidden_dim = 2;
  p.w_input = random_tensor({8, 2}, rng, 1.0, false);
  p.w_hidden = random_tensor({8, 2}, rng, 1.0, false);
  p.bias = random_tensor({8}, rng, 1.0, false);
  const std::vector<double> x{0.3, -0.7}, h0{0.1, 0.2}, c0{-0.4, 0.5};
  Tape tape;
  LstmState s = lstm_cell(tape, Tensor::vector(x), {Tensor::vector(h0), Tensor::vector(c0)}, p);

  auto pre = [&](std::size_t r) {
    return p.w_input.at(r, 0) * x[0] + p.w_input.at(r, 1) * x[1] + p.w_hidden.at(r, 0) * h0[0] +
           p.w_hidden.at(r, 1) * h0[1] + p.bias[r];
  };
  for (std::size_t j = 0; j < 2; ++j) {
    const double i = sigmoid_ref(pre(j));
    const double f = sigmoid_ref(pre(2 + j));
    const double g = std::tanh(pre(4 + j));
    const double o = sigmoid_ref(pre(6 + j));
    const double c = f * c0[j] + i * g;
    EXPECT_NEAR(s.c[j], c, 1e-15);
    EXPECT_NEAR(s.h[j], o * std::tanh(c), 1e-15);
  }
}

TEST(Lstm, UnrolledChainGradient) {
  std::mt19937_64 rng(11);
  ParamStore store;
  LstmParams p = LstmParams::create(store, "rnn", 3, 4, rng);
  std::vector<Tensor> xs{random_tensor({3}, rng), random_tensor({3}, rng), random_tensor({3}, rng)};
  Tensor w = random_tensor({4}, rng, 1.0, false);
  auto f = [&](Tape& t) {
    LstmState s = LstmState::zeros(4);
    for (const auto& x : xs) s = lstm_cell(t, x, s, p);
    return dot(t, s.h, w);
  };
  EXPECT_LE(max_fd_error(f, {p.w_input, p.w_hidden, p.bias, xs[0], xs[1], xs[2]}), 1e-4);
}

TEST(Lstm, ForgetBiasStartsAtOne) {
  std::mt19937_64 rng(12);
  ParamStore store;
  LstmParams p = LstmParams::create(store, "rnn", 3, 2, rng);
  EXPECT_EQ(p.bias.to_vector(), (std::vector<double>{0, 0, 1, 1, 0, 0, 0, 0}));
  const double bound = 1.0 / std::sqrt(3.0);
  for (double v : p.w_input.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Lstm, DimensionMismatch) {
  std::mt19937_64 rng(13);
  ParamStore store;
  LstmParams p = LstmParams::create(store, "rnn", 3, 2, rng);
  Tape tape;
  EXPECT_THROW(lstm_cell(tape, Tensor::vector({1, 2}), LstmState::zeros(2), p), DimensionError);
}
