#include "chatcap/dialog_capsule.hpp"

#include "chatcap/error.hpp"

namespace chatcap {

DialogCapsule::DialogCapsule(const Options& options, ParamStore& store, std::mt19937_64& rng)
    : options_(options) {
  rnn_ = LstmParams::create(store, "dialog.rnn", options.utterance_dim + 2 * options.d_model,
                            options.d_h, rng);
  w_context_ = store.add_uniform("dialog.attention.w_context", {options.d_h}, rng);
  w_satisfaction_ = store.add_uniform("dialog.satisfaction.weight", {options.num_satisfaction, options.d_h}, rng);
  b_satisfaction_ = store.add_zeros("dialog.satisfaction.bias", {options.num_satisfaction});
  w_curve_ = store.add_uniform("dialog.curve.weight", {options.num_curve, options.d_h}, rng);
  b_curve_ = store.add_zeros("dialog.curve.bias", {options.num_curve});
}

DialogState DialogCapsule::initial_state() const {
  return {LstmState::zeros(options_.d_h), 0};
}

DialogState DialogCapsule::step(Tape& tape, const DialogState& state, const Tensor& representation,
                                const Tensor& speaker, const Tensor& intent) const {
  const Tensor parts[3] = {representation, speaker, intent};
  return {lstm_cell(tape, concat(tape, parts), state.lstm, rnn_), state.step + 1};
}

DialogEncoding DialogCapsule::attend(Tape& tape, std::span<const Tensor> states,
                                     const std::vector<bool>& mask) const {
  if (states.empty()) throw ContractError("context attention over an empty dialog");
  DialogEncoding enc;
  enc.states = stack_columns(tape, states);
  enc.attention = masked_softmax(tape, vecmat(tape, w_context_, enc.states), mask);
  enc.representation = matvec(tape, enc.states, enc.attention);
  return enc;
}

DialogHeads DialogCapsule::heads(Tape& tape, const Tensor& representation) const {
  return {softmax(tape, add(tape, matvec(tape, w_satisfaction_, representation), b_satisfaction_)),
          softmax(tape, add(tape, matvec(tape, w_curve_, representation), b_curve_))};
}

}  // namespace chatcap
