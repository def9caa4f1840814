#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatcap/data.hpp"

namespace chatcap {

// K x K counts, rows = gold, columns = predicted.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  std::size_t classes() const { return k_; }
  std::uint64_t at(std::size_t gold, std::size_t predicted) const { return counts_.at(gold * k_ + predicted); }
  std::uint64_t total() const { return total_; }

  // Throws ContractError on an index >= K.
  void accumulate(std::size_t gold, std::size_t predicted);
  // Elementwise sum; throws ContractError when K differs.
  void merge(const ConfusionMatrix& other);

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct MacroScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  std::vector<double> class_precision;
  std::vector<double> class_recall;
  std::vector<double> class_f1;
};

// Mean of per-class P, R and F1 over all K classes (0/0 counts as 0);
// accuracy = trace / total. Throws ContractError on an empty matrix.
MacroScores macro_prf(const ConfusionMatrix& cm);

// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

// Confusion matrices for one evaluation pass. Dialog matrices stay empty
// when the corpus carries no dialog labels.
struct EvaluationCounts {
  ConfusionMatrix utterance;
  ConfusionMatrix satisfaction;
  ConfusionMatrix curve;

  explicit EvaluationCounts(const LabelSchema& schema);
};

struct MetricReport {
  std::string split;
  double loss = 0.0;
  MacroScores utterance;
  std::optional<MacroScores> satisfaction;
  std::optional<MacroScores> curve;
  std::size_t dialogs = 0;
  std::size_t utterances = 0;

  static MetricReport from(std::string split, double loss, const EvaluationCounts& counts, std::size_t dialogs);

  // Human-readable block.
  std::string text() const;
  // "key=value" lines with a stable key order.
  std::string key_values() const;
};

}  // namespace chatcap
