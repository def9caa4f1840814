#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chatcap/checkpoint.hpp"
#include "chatcap/data.hpp"
#include "chatcap/metrics.hpp"
#include "chatcap/model.hpp"

namespace chatcap {

struct TrainConfig {
  double lr_main = 1e-3;
  double lr_wordvec = 1e-4;
  std::size_t batch_size = 32;
  std::size_t checkpoint_every = 16;  // steps
  std::size_t max_epochs = 10;
  std::size_t max_steps = 0;  // 0 = bounded by max_epochs only
  std::uint64_t seed = 1;
  std::filesystem::path checkpoint_dir;  // empty = no checkpoint files
  std::ostream* metrics_log = nullptr;   // "step, split, loss, macroF1_utt, macroF1_sat, macroF1_curve"
};

// Value-only evaluation: argmax predictions against gold and the mean
// objective over the corpus.
MetricReport evaluate(const DialogModel& model, std::span<const EncodedDialog> dialogs, std::string split);

// Formats one metrics-log line; absent metrics print as "-".
std::string metrics_line(std::int64_t step, const MetricReport& report);

class Trainer {
 public:
  Trainer(DialogModel& model, Vocab vocab, TrainConfig config, nlohmann::json run_config = nlohmann::json::object());

  // Restores optimizer state and training position from a checkpoint whose
  // parameters were already loaded into the model.
  void resume(const TrainingPosition& position, const AdamState& adam);

  // One Adam step on the batch; returns the loss before the update. Throws
  // NumericError on a non-finite loss.
  double step(std::span<const PaddedDialog> batch);

  // Runs epochs until max_epochs / max_steps. Saves "last.ckpt" every
  // checkpoint_every steps and at the end; with a validation set, scores it
  // at each checkpoint and keeps the best utterance macro-F1 as "best.ckpt".
  // Returns the per-step training losses of this call.
  std::vector<double> fit(std::span<const EncodedDialog> train, std::span<const EncodedDialog> validation);

  // Invoked after every step with (step, loss).
  std::function<void(std::int64_t, double)> on_step;

  const TrainingPosition& position() const { return position_; }
  const AdamState& adam() const { return adam_; }
  DialogModel& model() { return model_; }

  void save(const std::filesystem::path& path) const;

 private:
  void checkpoint(std::span<const EncodedDialog> validation);

  DialogModel& model_;
  Vocab vocab_;
  TrainConfig config_;
  nlohmann::json run_config_;
  AdamState adam_;
  TrainingPosition position_;
};

}  // namespace chatcap
