#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatcap/data.hpp"
#include "chatcap/model.hpp"

namespace chatcap {

// d_word = d_model = d_h = d_a = 8, vocabulary of 20, rectifier, feedback
// and bidirectional utterance encoder all on, no dropout.
ModelConfig toy_config(std::uint64_t seed = 1);

// Random dialogs over the toy vocabulary with every label present.
std::vector<EncodedDialog> toy_dialogs(const ModelConfig& config, std::size_t count, std::size_t utterances,
                                       std::uint64_t seed);

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Test hook: adds 1 to the analytic gradient of this tensor.
  std::optional<std::string> corrupt;
};

struct TensorCheck {
  std::string name;
  std::size_t elements = 0;
  double max_relative_error = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;
  bool passed = true;
};

// Compares the tape gradient of the evaluation-mode objective with central
// differences for every element of every parameter. Relative error is
// |a - n| / max(|a|, |n|, 1e-6).
GradcheckReport gradcheck(DialogModel& model, std::span<const EncodedDialog> dialogs,
                          const GradcheckOptions& options = {});

}  // namespace chatcap
