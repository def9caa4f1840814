#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "chatcap/embed.hpp"

namespace chatcap {

// Closed, ordered label set. Index order is part of the checkpoint contract.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> labels);

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::string& at(std::size_t index) const { return labels_.at(index); }
  std::optional<std::size_t> find(std::string_view label) const;
  const std::vector<std::string>& labels() const { return labels_; }

  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<std::string> labels_;
};

struct LabelSchema {
  std::string name;
  LabelSet emotions;
  LabelSet satisfaction;
  LabelSet curve;
  LabelSet speakers;
  LabelSet intents;

  bool operator==(const LabelSchema&) const = default;

  // Six utterance emotions, User/Staff speakers and the intents used by the
  // synthetic generator.
  static LabelSchema customer_service();
  // Seven DailyDialog emotions, four dialog acts, dyadic speakers A/B.
  static LabelSchema dailydialog();
  // "customer-service" or "dailydialog".
  static LabelSchema by_name(std::string_view name);

  nlohmann::json to_json() const;
  static LabelSchema from_json(const nlohmann::json& j);
};

struct Utterance {
  std::vector<std::string> tokens;
  std::string speaker;
  std::string intent;
  std::string emotion;

  bool operator==(const Utterance&) const = default;
};

struct Dialog {
  std::string id;
  std::vector<Utterance> utterances;
  std::optional<std::string> satisfaction;
  std::optional<std::string> curve;

  bool operator==(const Dialog&) const = default;
};

std::vector<std::string> tokenize(std::string_view text);

// ---- interchange format: one JSON object per line -------------------------

std::vector<Dialog> parse_interchange(const std::filesystem::path& path, const LabelSchema& schema);
std::vector<Dialog> parse_interchange(std::istream& in, const std::string& source,
                                      const LabelSchema& schema);
void write_interchange(std::ostream& out, std::span<const Dialog> dialogs);
void write_interchange(const std::filesystem::path& path, std::span<const Dialog> dialogs);
nlohmann::json dialog_to_json(const Dialog& dialog);

// Parses one {"text", "speaker", "intent", "emotion"?} object. Throws
// SchemaError on unknown labels or missing fields.
Utterance parse_utterance(const nlohmann::json& j, const LabelSchema& schema, bool require_emotion);

// ---- DailyDialog raw format -----------------------------------------------

// Reads dialogues_<split>.txt, dialogues_emotion_<split>.txt and
// dialogues_act_<split>.txt from `dir/<split>/` or directly from `dir`.
std::vector<Dialog> load_dailydialog(const std::filesystem::path& dir, std::string_view split);
// Same, from already-open streams.
std::vector<Dialog> load_dailydialog(std::istream& text, std::istream& emotion, std::istream& act,
                                     std::string_view split);

// ---- model inputs ---------------------------------------------------------

struct UtteranceInput {
  std::vector<std::size_t> word_indices;
  std::size_t speaker_id = 0;
  std::size_t intent_id = 0;
  std::vector<bool> mask;  // true = real token

  std::size_t length() const { return word_indices.size(); }
  bool is_padding() const;
};

struct DialogGold {
  std::vector<std::size_t> emotions;
  std::optional<std::size_t> satisfaction;
  std::optional<std::size_t> curve;
};

struct EncodedDialog {
  std::string id;
  std::vector<UtteranceInput> utterances;
  DialogGold gold;
};

// Maps tokens through the vocabulary and labels through the schema. An
// utterance with no tokens is encoded as a single UNK token.
UtteranceInput encode_utterance(const Utterance& utterance, const Vocab& vocab,
                                const LabelSchema& schema);
EncodedDialog encode_dialog(const Dialog& dialog, const Vocab& vocab, const LabelSchema& schema);
std::vector<EncodedDialog> encode_dialogs(std::span<const Dialog> dialogs, const Vocab& vocab,
                                          const LabelSchema& schema);

// A dialog padded to a batch's maximum utterance count and token length.
// Padding utterances have utterance_mask == false and an all-false token mask.
struct PaddedDialog {
  std::string id;
  std::vector<UtteranceInput> utterances;
  std::vector<bool> utterance_mask;
  DialogGold gold;  // emotions padded with 0 at masked utterances
};

struct PaddedBatch {
  std::vector<PaddedDialog> dialogs;
  std::size_t max_utterances = 0;
  std::size_t max_tokens = 0;
};

PaddedDialog pad_dialog(const EncodedDialog& dialog, std::size_t max_utterances, std::size_t max_tokens);

// Shuffles by seed, buckets by utterance count, cuts batches of at most
// batch_size dialogs and shuffles the batch order.
std::vector<PaddedBatch> batch_pad(std::span<const EncodedDialog> dialogs, std::size_t batch_size,
                                   std::uint64_t seed);

}  // namespace chatcap
