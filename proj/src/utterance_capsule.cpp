#include "chatcap/utterance_capsule.hpp"

#include <algorithm>

#include "chatcap/error.hpp"

namespace chatcap {

Tensor rectify(Tape& tape, const Tensor& word, const Tensor& speaker, const Tensor& intent) {
  const Tensor parts[3] = {word, scale_by(tape, speaker, cosine(tape, word, speaker)),
                           scale_by(tape, intent, cosine(tape, word, intent))};
  return concat(tape, parts);
}

UtteranceCapsule::UtteranceCapsule(const Options& options, ParamStore& store, std::mt19937_64& rng)
    : options_(options) {
  const std::size_t input_dim = 3 * options.d_model;
  forward_rnn_ = LstmParams::create(store, "utterance.rnn", input_dim, options.d_h, rng);
  if (options.bidirectional) {
    backward_rnn_ = LstmParams::create(store, "utterance.rnn_reverse", input_dim, options.d_h, rng);
  }
  w_states_ = store.add_uniform("utterance.attention.w_states", {options.d_a, state_dim()}, rng);
  w_speaker_ = store.add_uniform("utterance.attention.w_speaker", {options.d_a, options.d_model}, rng);
  w_intent_ = store.add_uniform("utterance.attention.w_intent", {options.d_a, options.d_model}, rng);
  w_score_ = store.add_uniform("utterance.attention.w_score", {options.d_a}, rng);
  w_emotion_ = store.add_uniform("utterance.emotion.weight", {options.num_emotions, head_input_dim()}, rng);
  b_emotion_ = store.add_zeros("utterance.emotion.bias", {options.num_emotions});
}

std::vector<Tensor> UtteranceCapsule::run_direction(Tape& tape, const LstmParams& rnn,
                                                    std::span<const Tensor> inputs,
                                                    const std::vector<bool>& mask, bool reverse) const {
  const std::size_t n = inputs.size();
  std::vector<Tensor> columns(n);
  LstmState state = LstmState::zeros(options_.d_h);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = reverse ? n - 1 - k : k;
    if (mask[t]) state = lstm_cell(tape, inputs[t], state, rnn);
    columns[t] = state.h;
  }
  return columns;
}

UtteranceEncoding UtteranceCapsule::encode(Tape& tape, std::span<const Tensor> words,
                                           const std::vector<bool>& mask, const Tensor& speaker,
                                           const Tensor& intent) const {
  const std::size_t n = words.size();
  if (n == 0) throw ContractError("encode: utterance has no positions");
  if (mask.size() != n) throw DimensionError("encode: mask length differs from token count");
  if (std::none_of(mask.begin(), mask.end(), [](bool b) { return b; })) {
    throw InvalidMaskError("encode: utterance has no unmasked token");
  }

  std::vector<Tensor> inputs(n);
  for (std::size_t t = 0; t < n; ++t) {
    if (!mask[t]) continue;
    if (options_.use_rectifier) {
      inputs[t] = rectify(tape, words[t], speaker, intent);
    } else {
      const Tensor parts[3] = {words[t], speaker, intent};
      inputs[t] = concat(tape, parts);
    }
  }

  std::vector<Tensor> columns = run_direction(tape, forward_rnn_, inputs, mask, false);
  if (options_.bidirectional) {
    const std::vector<Tensor> reverse = run_direction(tape, backward_rnn_, inputs, mask, true);
    for (std::size_t t = 0; t < n; ++t) {
      const Tensor both[2] = {columns[t], reverse[t]};
      columns[t] = concat(tape, both);
    }
  }

  UtteranceEncoding enc;
  enc.states = stack_columns(tape, columns);
  // M_u = ReLU(W_u1 H_u + W_u2 (v_o x N) + W_u3 (v_e x N))
  Tensor m = add(tape,
                 add(tape, matmul(tape, w_states_, enc.states),
                     matmul(tape, w_speaker_, tile_columns(tape, speaker, n))),
                 matmul(tape, w_intent_, tile_columns(tape, intent, n)));
  m = relu(tape, m);
  enc.attention = masked_softmax(tape, vecmat(tape, w_score_, m), mask);
  enc.representation = matvec(tape, enc.states, enc.attention);
  return enc;
}

Tensor UtteranceCapsule::emotion_logits(Tape& tape, const Tensor& representation,
                                        const Tensor& feedback) const {
  Tensor input = representation;
  if (options_.use_feedback) {
    const Tensor parts[2] = {representation, feedback};
    input = concat(tape, parts);
  }
  return add(tape, matvec(tape, w_emotion_, input), b_emotion_);
}

}  // namespace chatcap
