#pragma once

// Planted-label customer-service dialogs.
//
// Each utterance mixes keywords of its emotion with shared filler words.
// Some utterances are filler only; their emotion repeats the same speaker's
// previous emotion, so only dialog context can recover it. Dialog labels
// are pure functions of the User emotion sequence:
//   valence: Anger, Dissatisfaction, Worry = -1; Emotionlessness = 0;
//            Happiness, Comfort = +1
//   satisfaction: sign of the mean valence of the last three User
//            utterances (all of them when fewer than three)
//   curve over User valences v_1..v_k:
//     constant (or k == 1)              -> Still
//     non-decreasing                    -> Up
//     non-increasing                    -> Down
//     an interior value below both ends
//       and none above both ends        -> Concave
//     an interior value above both ends
//       and none below both ends        -> Convex
//     otherwise sign(v_k - v_1) as Up / Down / Still

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "chatcap/data.hpp"

namespace chatcap {

struct SyntheticOptions {
  std::size_t min_utterances = 4;
  std::size_t max_utterances = 10;
  double repeat_speaker = 0.2;  // chance the next utterance keeps the same speaker
  double ambiguous = 0.5;       // chance an eligible utterance is filler only
};

// Requires the customer-service schema. Deterministic in (n, seed, options).
std::vector<Dialog> gen_synthetic(std::size_t n_dialogs, std::uint64_t seed, const LabelSchema& schema,
                                  const SyntheticOptions& options = {});

int emotion_valence(std::string_view emotion);
std::string satisfaction_from_valences(std::span<const int> user_valences);
std::string curve_from_valences(std::span<const int> user_valences);

}  // namespace chatcap
