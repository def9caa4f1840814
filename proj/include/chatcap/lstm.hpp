#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "chatcap/tensor.hpp"

namespace chatcap {

class ParamStore;

// Weights of one LSTM layer. Gate rows are stacked in the order
// input, forget, candidate, output.
struct LstmParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Tensor w_input;   // [4h x input_dim]
  Tensor w_hidden;  // [4h x h]
  Tensor bias;      // [4h]

  // Registers "<prefix>.w_input", "<prefix>.w_hidden", "<prefix>.bias".
  // Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero except the
  // forget gate which starts at +1.
  static LstmParams create(ParamStore& store, const std::string& prefix, std::size_t input_dim,
                           std::size_t hidden_dim, std::mt19937_64& rng);
};

struct LstmState {
  Tensor h;
  Tensor c;

  static LstmState zeros(std::size_t hidden_dim);
};

// c = f*c_prev + i*g, h = o*tanh(c)
LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev, const LstmParams& params);

}  // namespace chatcap
