#include "chatcap/lstm.hpp"

#include "chatcap/error.hpp"
#include "chatcap/optim.hpp"

namespace chatcap {

LstmParams LstmParams::create(ParamStore& store, const std::string& prefix,
                              std::size_t input_dim, std::size_t hidden_dim,
                              std::mt19937_64& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_input = store.add_uniform(prefix + ".w_input", {4 * hidden_dim, input_dim}, rng);
  p.w_hidden = store.add_uniform(prefix + ".w_hidden", {4 * hidden_dim, hidden_dim}, rng);
  p.bias = store.add_zeros(prefix + ".bias", {4 * hidden_dim});
  auto b = p.bias.mutable_data();
  for (std::size_t i = hidden_dim; i < 2 * hidden_dim; ++i) b[i] = 1.0;
  return p;
}

LstmState LstmState::zeros(std::size_t hidden_dim) {
  return {Tensor::zeros({hidden_dim}), Tensor::zeros({hidden_dim})};
}

LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& prev, const LstmParams& params) {
  const std::size_t h = params.hidden_dim;
  if (x.rank() != 1 || x.dim(0) != params.input_dim) {
    throw DimensionError("lstm_cell: input " + shape_str(x.shape()) + " but layer expects [" +
                         std::to_string(params.input_dim) + "]");
  }
  if (prev.h.shape() != Shape{h} || prev.c.shape() != Shape{h}) {
    throw DimensionError("lstm_cell: state " + shape_str(prev.h.shape()) + "/" +
                         shape_str(prev.c.shape()) + " but layer expects [" + std::to_string(h) +
                         "]");
  }
  Tensor pre = add(tape, add(tape, matvec(tape, params.w_input, x),
                             matvec(tape, params.w_hidden, prev.h)),
                   params.bias);
  Tensor in_gate = sigmoid(tape, slice(tape, pre, 0, h));
  Tensor forget_gate = sigmoid(tape, slice(tape, pre, h, h));
  Tensor candidate = tanh(tape, slice(tape, pre, 2 * h, h));
  Tensor out_gate = sigmoid(tape, slice(tape, pre, 3 * h, h));
  Tensor c = add(tape, mul(tape, forget_gate, prev.c), mul(tape, in_gate, candidate));
  Tensor hidden = mul(tape, out_gate, tanh(tape, c));
  return {hidden, c};
}

}  // namespace chatcap
