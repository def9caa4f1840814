#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "chatcap/data.hpp"
#include "chatcap/dialog_capsule.hpp"
#include "chatcap/embed.hpp"
#include "chatcap/lstm.hpp"
#include "chatcap/optim.hpp"
#include "chatcap/utterance_capsule.hpp"

namespace chatcap {

enum class Architecture { ChatCapsule, LstmBaseline };

std::string to_string(Architecture a);
Architecture architecture_from_string(std::string_view s);

struct ModelConfig {
  Architecture architecture = Architecture::ChatCapsule;
  std::size_t vocab_size = 2;
  std::size_t d_word = 50;
  std::size_t d_model = 32;
  std::size_t d_h = 32;
  std::size_t d_a = 32;
  LabelSchema schema = LabelSchema::customer_service();
  double dropout = 0.5;
  bool use_rectifier = true;
  bool use_feedback = true;
  bool bidirectional_utterance = false;
  std::uint64_t seed = 1;

  // Throws ContractError on empty label sets, zero dims or a bad dropout rate.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  bool operator==(const ModelConfig&) const = default;
};

struct ForwardOptions {
  bool training = false;         // enables dropout
  std::uint64_t dropout_seed = 0;
};

// Differentiable outputs of one dialog forward pass. Entries for padding
// utterances are undefined tensors.
struct DialogForward {
  std::vector<Tensor> emotion;              // P_i
  Tensor satisfaction;                      // P_sat
  Tensor curve;                             // P_curve
  std::vector<Tensor> utterance_attention;  // alpha_u (Chat-Capsule only)
  Tensor dialog_attention;                  // alpha_d (Chat-Capsule only)
  std::vector<bool> utterance_mask;
};

// Plain-value copy of a DialogForward, for reporting and comparisons.
struct DialogPrediction {
  std::vector<std::vector<double>> emotion;
  std::vector<double> satisfaction;
  std::vector<double> curve;
  std::vector<std::vector<double>> utterance_attention;
  std::vector<double> dialog_attention;

  static DialogPrediction from(const DialogForward& f);
};

// Wraps an encoded dialog without any padding.
PaddedDialog unpadded(const EncodedDialog& dialog);
PaddedDialog unpadded(std::span<const UtteranceInput> utterances);

class DialogModel {
 public:
  explicit DialogModel(ModelConfig config);
  virtual ~DialogModel() = default;
  DialogModel(const DialogModel&) = delete;
  DialogModel& operator=(const DialogModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const EmbeddingTable& word_embeddings() const { return words_; }
  // Copies a [|V| x d_word] table into the word embeddings; the PAD row is zeroed.
  void set_word_vectors(const Tensor& table);

  virtual DialogForward forward(Tape& tape, const PaddedDialog& dialog, const ForwardOptions& options) const = 0;
  DialogForward forward(Tape& tape, const EncodedDialog& dialog, const ForwardOptions& options = {}) const;
  // Value-only forward on a non-recording tape.
  DialogPrediction predict(const EncodedDialog& dialog) const;

 protected:
  void check_utterance(const UtteranceInput& u) const;
  // Word vector for one token: embedding row, optionally projected, then
  // dropout when training.
  Tensor word_vector(Tape& tape, std::size_t index, const InputProjection* projection,
                     const ForwardOptions& options, std::mt19937_64& rng) const;

  ModelConfig config_;
  ParamStore params_;
  EmbeddingTable words_;
};

class ChatCapsuleModel : public DialogModel {
 public:
  explicit ChatCapsuleModel(ModelConfig config);

  DialogForward forward(Tape& tape, const PaddedDialog& dialog, const ForwardOptions& options) const override;
  using DialogModel::forward;

  const UtteranceCapsule& utterance_capsule() const { return *utterance_; }
  const DialogCapsule& dialog_capsule() const { return *dialog_; }

  struct UtteranceStep {
    UtteranceEncoding encoding;
    Tensor emotion;  // P_i
    DialogState next_state;
    Tensor speaker;
    Tensor intent;
  };
  // Encodes utterance i, emits P_i from (r_u, h_{i-1}) and advances the
  // dialog state. Shared by the batch forward and the streaming session.
  UtteranceStep step(Tape& tape, const UtteranceInput& utterance, const DialogState& state,
                     const ForwardOptions& options, std::size_t position) const;

 private:
  InputProjection projection_;
  Tensor speakers_;  // [|speakers| x d_model]
  Tensor intents_;   // [|intents| x d_model]
  std::unique_ptr<UtteranceCapsule> utterance_;
  std::unique_ptr<DialogCapsule> dialog_;
};

// Incremental Chat-Capsule inference: one utterance at a time, never
// looking ahead. P_i matches ChatCapsuleModel::forward bit for bit.
class StreamSession {
 public:
  explicit StreamSession(const ChatCapsuleModel& model);

  struct Output {
    std::vector<double> emotion;
    std::vector<double> utterance_attention;
    // Dialog heads evaluated on the prefix seen so far.
    std::vector<double> running_satisfaction;
    std::vector<double> running_curve;
  };

  Output push(const UtteranceInput& utterance);
  // Same as push() but checks that `position` is the next expected index.
  Output push(std::size_t position, const UtteranceInput& utterance);
  std::size_t size() const { return state_.step; }
  void reset();

 private:
  const ChatCapsuleModel* model_;
  DialogState state_;
  std::vector<Tensor> states_;
};

// Baseline: word-vector LSTM per utterance (final state, no profiles, no
// attention), utterance head on that state; a second LSTM over utterance
// states feeds the dialog heads from its final state.
class LstmBaselineModel : public DialogModel {
 public:
  explicit LstmBaselineModel(ModelConfig config);

  DialogForward forward(Tape& tape, const PaddedDialog& dialog, const ForwardOptions& options) const override;
  using DialogModel::forward;

 private:
  LstmParams utterance_rnn_;
  LstmParams dialog_rnn_;
  Tensor w_emotion_, b_emotion_;
  Tensor w_satisfaction_, b_satisfaction_;
  Tensor w_curve_, b_curve_;
};

std::unique_ptr<DialogModel> make_model(const ModelConfig& config);

// ---- objective ------------------------------------------------------------

struct LossTerms {
  Tensor total;       // J + U
  Tensor utterance;   // J: mean CE over real utterances
  Tensor dialog;      // U: mean satisfaction CE + mean curve CE; undefined without dialog labels
  std::size_t utterances = 0;
  std::size_t satisfaction_dialogs = 0;
  std::size_t curve_dialogs = 0;
};

// Utterance CE averaged over real utterances of the batch plus dialog CE
// averaged over the dialogs carrying each label. Dialogs without a
// satisfaction or curve label contribute nothing to that term.
LossTerms loss_total(Tape& tape, std::span<const DialogForward> predictions,
                     std::span<const DialogGold> gold);

}  // namespace chatcap
