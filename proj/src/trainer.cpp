#include "chatcap/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "chatcap/error.hpp"
#include "chatcap/random.hpp"

namespace chatcap {

MetricReport evaluate(const DialogModel& model, std::span<const EncodedDialog> dialogs, std::string split) {
  if (dialogs.empty()) throw ContractError("evaluate on an empty corpus");
  EvaluationCounts counts(model.config().schema);
  double utterance_ce = 0.0, satisfaction_ce = 0.0, curve_ce = 0.0;
  for (const auto& dialog : dialogs) {
    const DialogPrediction p = model.predict(dialog);
    for (std::size_t i = 0; i < p.emotion.size(); ++i) {
      const std::size_t gold = dialog.gold.emotions.at(i);
      counts.utterance.accumulate(gold, argmax(p.emotion[i]));
      utterance_ce -= std::log(p.emotion[i].at(gold));
    }
    if (dialog.gold.satisfaction) {
      counts.satisfaction.accumulate(*dialog.gold.satisfaction, argmax(p.satisfaction));
      satisfaction_ce -= std::log(p.satisfaction.at(*dialog.gold.satisfaction));
    }
    if (dialog.gold.curve) {
      counts.curve.accumulate(*dialog.gold.curve, argmax(p.curve));
      curve_ce -= std::log(p.curve.at(*dialog.gold.curve));
    }
  }
  auto mean = [](double total, std::uint64_t n) { return n == 0 ? 0.0 : total / static_cast<double>(n); };
  const double loss = mean(utterance_ce, counts.utterance.total()) + mean(satisfaction_ce, counts.satisfaction.total()) +
                      mean(curve_ce, counts.curve.total());
  return MetricReport::from(std::move(split), loss, counts, dialogs.size());
}

std::string metrics_line(std::int64_t step, const MetricReport& report) {
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  return std::to_string(step) + ", " + report.split + ", " + f(report.loss) + ", " + f(report.utterance.f1) + ", " +
         (report.satisfaction ? f(report.satisfaction->f1) : "-") + ", " + (report.curve ? f(report.curve->f1) : "-");
}

Trainer::Trainer(DialogModel& model, Vocab vocab, TrainConfig config, nlohmann::json run_config)
    : model_(model), vocab_(std::move(vocab)), config_(std::move(config)), run_config_(std::move(run_config)) {
  if (config_.batch_size == 0) throw ContractError("batch_size must be positive");
  if (config_.checkpoint_every == 0) throw ContractError("checkpoint_every must be positive");
  if (vocab_.size() != model_.config().vocab_size) throw ContractError("vocabulary does not match the model");
  position_.seed = config_.seed;
}

void Trainer::resume(const TrainingPosition& position, const AdamState& adam) {
  position_ = position;
  adam_ = adam;
}

double Trainer::step(std::span<const PaddedDialog> batch) {
  if (batch.empty()) throw ContractError("training step on an empty batch");
  Tape tape;
  std::vector<DialogForward> forwards;
  std::vector<DialogGold> gold;
  forwards.reserve(batch.size());
  for (std::size_t d = 0; d < batch.size(); ++d) {
    ForwardOptions options;
    options.training = true;
    options.dropout_seed = derive_seed(config_.seed, {static_cast<std::uint64_t>(position_.step), d});
    forwards.push_back(model_.forward(tape, batch[d], options));
    gold.push_back(batch[d].gold);
  }
  const LossTerms loss = loss_total(tape, forwards, gold);
  const double value = loss.total.item();
  if (!std::isfinite(value)) {
    throw NumericError("non-finite loss " + std::to_string(value) + " at step " + std::to_string(position_.step) +
                       " (utterance term " + std::to_string(loss.utterance.item()) + ", dialog term " +
                       (loss.dialog.defined() ? std::to_string(loss.dialog.item()) : std::string("absent")) + ")");
  }
  tape.backward(loss.total);
  model_.params().materialize_grads();
  auto groups = model_.params().groups({{std::string(kMainGroup), config_.lr_main},
                                        {std::string(kWordVectorGroup), config_.lr_wordvec}});
  adam_step(groups, adam_);
  ++position_.step;
  return value;
}

void Trainer::save(const std::filesystem::path& path) const {
  save_checkpoint(path, model_, vocab_, position_, &adam_, run_config_);
}

void Trainer::checkpoint(std::span<const EncodedDialog> validation) {
  if (!validation.empty()) {
    const MetricReport report = evaluate(model_, validation, "valid");
    if (config_.metrics_log) *config_.metrics_log << metrics_line(position_.step, report) << std::endl;
    if (report.utterance.f1 > position_.best_metric) {
      position_.best_metric = report.utterance.f1;
      position_.best_step = position_.step;
      if (!config_.checkpoint_dir.empty()) save(config_.checkpoint_dir / "best.ckpt");
    }
  }
  if (!config_.checkpoint_dir.empty()) save(config_.checkpoint_dir / "last.ckpt");
}

std::vector<double> Trainer::fit(std::span<const EncodedDialog> train, std::span<const EncodedDialog> validation) {
  if (train.empty()) throw ContractError("training corpus is empty");
  if (!config_.checkpoint_dir.empty()) std::filesystem::create_directories(config_.checkpoint_dir);
  std::vector<double> losses;
  auto done = [&] { return config_.max_steps != 0 && position_.step >= static_cast<std::int64_t>(config_.max_steps); };

  if (position_.step == 0) checkpoint(validation);
  bool ended_on_checkpoint = true;
  while (position_.epoch < static_cast<std::int64_t>(config_.max_epochs) && !done()) {
    const auto batches =
        batch_pad(train, config_.batch_size, derive_seed(config_.seed, {static_cast<std::uint64_t>(position_.epoch)}));
    // Every epoch has the same number of batches, so the offset into the
    // current epoch follows from the step counter.
    const std::int64_t epoch_start = position_.epoch * static_cast<std::int64_t>(batches.size());
    for (std::size_t b = static_cast<std::size_t>(position_.step - epoch_start); b < batches.size() && !done(); ++b) {
      const double loss = step(batches[b].dialogs);
      losses.push_back(loss);
      if (config_.metrics_log) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", loss);
        *config_.metrics_log << position_.step << ", train, " << buf << ", -, -, -" << std::endl;
      }
      if (on_step) on_step(position_.step, loss);
      ended_on_checkpoint = position_.step % static_cast<std::int64_t>(config_.checkpoint_every) == 0;
      if (ended_on_checkpoint) checkpoint(validation);
    }
    if (position_.step - epoch_start == static_cast<std::int64_t>(batches.size())) ++position_.epoch;
  }
  if (!ended_on_checkpoint) checkpoint(validation);
  return losses;
}

}  // namespace chatcap
