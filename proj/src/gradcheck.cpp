#include "chatcap/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "chatcap/error.hpp"
#include "chatcap/random.hpp"

namespace chatcap {

ModelConfig toy_config(std::uint64_t seed) {
  ModelConfig c;
  c.vocab_size = 20;
  c.d_word = c.d_model = c.d_h = c.d_a = 8;
  c.dropout = 0.0;
  c.use_rectifier = true;
  c.use_feedback = true;
  c.bidirectional_utterance = true;
  c.seed = seed;
  return c;
}

std::vector<EncodedDialog> toy_dialogs(const ModelConfig& config, std::size_t count, std::size_t utterances,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, {7}));
  auto draw = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  const LabelSchema& s = config.schema;
  std::vector<EncodedDialog> out(count);
  for (std::size_t d = 0; d < count; ++d) {
    out[d].id = "toy-" + std::to_string(d);
    for (std::size_t i = 0; i < utterances; ++i) {
      UtteranceInput u;
      const std::size_t n = draw(1, 5);
      for (std::size_t t = 0; t < n; ++t) u.word_indices.push_back(draw(kUnkIndex, config.vocab_size - 1));
      u.mask.assign(n, true);
      u.speaker_id = draw(0, s.speakers.size() - 1);
      u.intent_id = draw(0, s.intents.size() - 1);
      out[d].utterances.push_back(std::move(u));
      out[d].gold.emotions.push_back(draw(0, s.emotions.size() - 1));
    }
    out[d].gold.satisfaction = draw(0, s.satisfaction.size() - 1);
    out[d].gold.curve = draw(0, s.curve.size() - 1);
  }
  return out;
}

namespace {

double objective(const DialogModel& model, std::span<const PaddedDialog> dialogs, Tape& tape, Tensor* loss_out) {
  std::vector<DialogForward> forwards;
  std::vector<DialogGold> gold;
  for (const auto& d : dialogs) {
    forwards.push_back(model.forward(tape, d, ForwardOptions{}));
    gold.push_back(d.gold);
  }
  LossTerms loss = loss_total(tape, forwards, gold);
  if (loss_out) *loss_out = loss.total;
  return loss.total.item();
}

}  // namespace

GradcheckReport gradcheck(DialogModel& model, std::span<const EncodedDialog> dialogs, const GradcheckOptions& options) {
  if (dialogs.empty()) throw ContractError("gradcheck needs at least one dialog");
  std::vector<PaddedDialog> padded;
  for (const auto& d : dialogs) padded.push_back(unpadded(d));

  ParamStore& params = model.params();
  if (options.corrupt && params.find(*options.corrupt) == nullptr) {
    throw ContractError("unknown parameter '" + *options.corrupt + "'");
  }
  params.clear_grads();
  {
    Tape tape;
    Tensor loss;
    objective(model, padded, tape, &loss);
    tape.backward(loss);
  }
  params.materialize_grads();

  GradcheckReport report;
  for (const auto& entry : params.entries()) {
    Tensor t = entry.tensor;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    if (options.corrupt == entry.name) {
      for (auto& g : analytic) g += 1.0;
    }
    TensorCheck check;
    check.name = entry.name;
    check.elements = t.numel();
    auto data = t.mutable_data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double original = data[k];
      data[k] = original + options.step;
      Tape plus(false);
      const double f_plus = objective(model, padded, plus, nullptr);
      data[k] = original - options.step;
      Tape minus(false);
      const double f_minus = objective(model, padded, minus, nullptr);
      data[k] = original;
      const double numeric = (f_plus - f_minus) / (2.0 * options.step);
      const double err =
          std::abs(analytic[k] - numeric) / std::max({std::abs(analytic[k]), std::abs(numeric), 1e-6});
      check.max_relative_error = std::max(check.max_relative_error, err);
    }
    check.passed = check.max_relative_error <= options.tolerance;
    report.passed = report.passed && check.passed;
    report.tensors.push_back(check);
  }
  params.clear_grads();
  return report;
}

}  // namespace chatcap
