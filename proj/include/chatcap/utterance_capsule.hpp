#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "chatcap/lstm.hpp"
#include "chatcap/optim.hpp"
#include "chatcap/tensor.hpp"

namespace chatcap {

// Per-token profile rectifier:
//   v_o' = v_o * cos(w, v_o),  v_e' = v_e * cos(w, v_e),  output [w, v_o', v_e'].
Tensor rectify(Tape& tape, const Tensor& word, const Tensor& speaker, const Tensor& intent);

struct UtteranceEncoding {
  Tensor states;          // H_u, [state_dim x N]
  Tensor representation;  // r_u = H_u . alpha_u
  Tensor attention;       // alpha_u, [N], zero at masked tokens
};

// Utterance-level capsule: rectifier, token LSTM, profile-guided attention
// and the emotion head that also sees the dialog feedback state.
class UtteranceCapsule {
 public:
  struct Options {
    std::size_t d_model = 32;
    std::size_t d_h = 32;
    std::size_t d_a = 32;
    std::size_t num_emotions = 6;
    std::size_t feedback_dim = 32;
    bool bidirectional = false;
    bool use_rectifier = true;
    bool use_feedback = true;
  };

  // Registers its parameters under "utterance.".
  UtteranceCapsule(const Options& options, ParamStore& store, std::mt19937_64& rng);

  const Options& options() const { return options_; }
  // Dimension of a column of H_u and of r_u.
  std::size_t state_dim() const { return options_.bidirectional ? 2 * options_.d_h : options_.d_h; }
  std::size_t head_input_dim() const { return state_dim() + (options_.use_feedback ? options_.feedback_dim : 0); }

  // `words` holds the projected word vector of every position; entries at
  // masked positions are ignored and may be undefined. Masked positions do
  // not advance the LSTM and get exactly zero attention.
  UtteranceEncoding encode(Tape& tape, std::span<const Tensor> words, const std::vector<bool>& mask,
                           const Tensor& speaker, const Tensor& intent) const;

  // W_p [r_u, feedback] + b_p. `feedback` is ignored when feedback is off.
  Tensor emotion_logits(Tape& tape, const Tensor& representation, const Tensor& feedback) const;

 private:
  std::vector<Tensor> run_direction(Tape& tape, const LstmParams& rnn, std::span<const Tensor> inputs,
                                    const std::vector<bool>& mask, bool reverse) const;

  Options options_;
  LstmParams forward_rnn_;
  LstmParams backward_rnn_;
  Tensor w_states_;   // W_u1 [d_a x state_dim]
  Tensor w_speaker_;  // W_u2 [d_a x d_model]
  Tensor w_intent_;   // W_u3 [d_a x d_model]
  Tensor w_score_;    // w_u [d_a]
  Tensor w_emotion_;  // W_p [|E| x head_input_dim]
  Tensor b_emotion_;  // b_p [|E|]
};

}  // namespace chatcap
