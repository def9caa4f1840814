#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "chatcap/lstm.hpp"
#include "chatcap/optim.hpp"
#include "chatcap/tensor.hpp"

namespace chatcap {

struct DialogState {
  LstmState lstm;
  std::size_t step = 0;  // utterances consumed
};

struct DialogEncoding {
  Tensor states;          // H_d, [d_h x M]
  Tensor attention;       // alpha_d, [M]
  Tensor representation;  // r_d = H_d . alpha_d
};

struct DialogHeads {
  Tensor satisfaction;  // P_sat over the satisfaction labels
  Tensor curve;         // P_curve over the curve labels
};

// Dialog-level capsule: an LSTM over [r_u, v_o, v_e] per utterance,
// context attention over its states, and the satisfaction / curve heads.
class DialogCapsule {
 public:
  struct Options {
    std::size_t utterance_dim = 32;
    std::size_t d_model = 32;
    std::size_t d_h = 32;
    std::size_t num_satisfaction = 3;
    std::size_t num_curve = 5;
  };

  // Registers its parameters under "dialog.".
  DialogCapsule(const Options& options, ParamStore& store, std::mt19937_64& rng);

  const Options& options() const { return options_; }

  DialogState initial_state() const;
  // One LSTM step on [r_u, v_o, v_e].
  DialogState step(Tape& tape, const DialogState& state, const Tensor& representation,
                   const Tensor& speaker, const Tensor& intent) const;
  // e_d = w_d . H_d, alpha_d = softmax(e_d) over unmasked columns,
  // r_d = H_d . alpha_d. Throws ContractError for an empty dialog.
  DialogEncoding attend(Tape& tape, std::span<const Tensor> states, const std::vector<bool>& mask) const;
  DialogHeads heads(Tape& tape, const Tensor& representation) const;

 private:
  Options options_;
  LstmParams rnn_;
  Tensor w_context_;  // w_d [d_h]
  Tensor w_satisfaction_;
  Tensor b_satisfaction_;
  Tensor w_curve_;
  Tensor b_curve_;
};

}  // namespace chatcap
