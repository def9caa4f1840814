#include "chatcap/data.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "chatcap/error.hpp"
#include "chatcap/random.hpp"

namespace chatcap {

using nlohmann::json;

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (labels_[i] == labels_[j]) throw SchemaError("duplicate label '" + labels_[i] + "'");
    }
  }
}

std::optional<std::size_t> LabelSet::find(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  return std::nullopt;
}

namespace {

LabelSet dialog_satisfaction() { return LabelSet({"Negative", "Neutral", "Positive"}); }
LabelSet dialog_curve() { return LabelSet({"Concave", "Still", "Up", "Down", "Convex"}); }

}  // namespace

LabelSchema LabelSchema::customer_service() {
  LabelSchema s;
  s.name = "customer-service";
  s.emotions = LabelSet({"Anger", "Dissatisfaction", "Worry", "Emotionlessness", "Happiness", "Comfort"});
  s.satisfaction = dialog_satisfaction();
  s.curve = dialog_curve();
  s.speakers = LabelSet({"User", "Staff"});
  s.intents = LabelSet({"Greeting", "Inquiry", "Complaint", "Request", "Explanation", "Apology", "Thanks"});
  return s;
}

LabelSchema LabelSchema::dailydialog() {
  LabelSchema s;
  s.name = "dailydialog";
  s.emotions = LabelSet({"neutral", "anger", "disgust", "fear", "happiness", "sadness", "surprise"});
  s.satisfaction = dialog_satisfaction();
  s.curve = dialog_curve();
  s.speakers = LabelSet({"A", "B"});
  s.intents = LabelSet({"inform", "question", "directive", "commissive"});
  return s;
}

LabelSchema LabelSchema::by_name(std::string_view name) {
  if (name == "customer-service") return customer_service();
  if (name == "dailydialog") return dailydialog();
  throw SchemaError("unknown label schema '" + std::string(name) + "'");
}

json LabelSchema::to_json() const {
  return json{{"name", name},
              {"emotions", emotions.labels()},
              {"satisfaction", satisfaction.labels()},
              {"curve", curve.labels()},
              {"speakers", speakers.labels()},
              {"intents", intents.labels()}};
}

LabelSchema LabelSchema::from_json(const json& j) {
  try {
    LabelSchema s;
    s.name = j.at("name").get<std::string>();
    s.emotions = LabelSet(j.at("emotions").get<std::vector<std::string>>());
    s.satisfaction = LabelSet(j.at("satisfaction").get<std::vector<std::string>>());
    s.curve = LabelSet(j.at("curve").get<std::vector<std::string>>());
    s.speakers = LabelSet(j.at("speakers").get<std::vector<std::string>>());
    s.intents = LabelSet(j.at("intents").get<std::vector<std::string>>());
    for (const LabelSet* set : {&s.emotions, &s.satisfaction, &s.curve, &s.speakers, &s.intents}) {
      if (set->empty()) throw SchemaError("label schema '" + s.name + "' has an empty label set");
    }
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed label schema: ") + e.what());
  }
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

// ---- interchange ----------------------------------------------------------

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string required_string(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw SchemaError(where + ": missing \"" + key + "\"");
  if (!it->is_string()) throw SchemaError(where + ": \"" + key + "\" is not a string");
  return it->get<std::string>();
}

void check_label(const LabelSet& set, const std::string& value, const std::string& what,
                 std::vector<std::string>& offenders) {
  if (!set.find(value)) offenders.push_back(what + " '" + value + "'");
}

}  // namespace

Utterance parse_utterance(const json& j, const LabelSchema& schema, bool require_emotion) {
  if (!j.is_object()) throw SchemaError("utterance is not a JSON object");
  Utterance u;
  u.tokens = tokenize(required_string(j, "text", "utterance"));
  u.speaker = required_string(j, "speaker", "utterance");
  u.intent = required_string(j, "intent", "utterance");
  if (require_emotion || j.contains("emotion")) u.emotion = required_string(j, "emotion", "utterance");
  std::vector<std::string> offenders;
  check_label(schema.speakers, u.speaker, "speaker", offenders);
  check_label(schema.intents, u.intent, "intent", offenders);
  if (!u.emotion.empty()) check_label(schema.emotions, u.emotion, "emotion", offenders);
  if (!offenders.empty()) {
    std::string msg = "unknown labels for schema '" + schema.name + "':";
    for (const auto& o : offenders) msg += " " + o;
    throw SchemaError(msg);
  }
  return u;
}

std::vector<Dialog> parse_interchange(const std::filesystem::path& path, const LabelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_interchange(in, path.string(), schema);
}

std::vector<Dialog> parse_interchange(std::istream& in, const std::string& source,
                                      const LabelSchema& schema) {
  std::vector<Dialog> dialogs;
  std::vector<std::string> offenders;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(source, line_no, e.what());
    }
    const std::string where = source + ":" + std::to_string(line_no);
    if (!j.is_object()) throw SchemaError(where + ": dialog is not a JSON object");
    Dialog d;
    d.id = required_string(j, "id", where);
    auto utts = j.find("utterances");
    if (utts == j.end() || !utts->is_array()) throw SchemaError(where + ": missing \"utterances\" array");
    if (utts->empty()) throw SchemaError(where + ": dialog has no utterances");
    for (std::size_t k = 0; k < utts->size(); ++k) {
      const json& uj = (*utts)[k];
      const std::string uwhere = where + " utterance " + std::to_string(k);
      if (!uj.is_object()) throw SchemaError(uwhere + ": not a JSON object");
      Utterance u;
      u.tokens = tokenize(required_string(uj, "text", uwhere));
      u.speaker = required_string(uj, "speaker", uwhere);
      u.intent = required_string(uj, "intent", uwhere);
      u.emotion = required_string(uj, "emotion", uwhere);
      check_label(schema.speakers, u.speaker, uwhere + " speaker", offenders);
      check_label(schema.intents, u.intent, uwhere + " intent", offenders);
      check_label(schema.emotions, u.emotion, uwhere + " emotion", offenders);
      d.utterances.push_back(std::move(u));
    }
    if (j.contains("satisfaction") && !j["satisfaction"].is_null()) {
      d.satisfaction = required_string(j, "satisfaction", where);
      check_label(schema.satisfaction, *d.satisfaction, where + " satisfaction", offenders);
    }
    if (j.contains("curve") && !j["curve"].is_null()) {
      d.curve = required_string(j, "curve", where);
      check_label(schema.curve, *d.curve, where + " curve", offenders);
    }
    dialogs.push_back(std::move(d));
  }
  if (!offenders.empty()) {
    std::string msg = "unknown labels for schema '" + schema.name + "':";
    const std::size_t shown = std::min<std::size_t>(offenders.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) msg += "\n  " + offenders[i];
    if (shown < offenders.size()) msg += "\n  ... and " + std::to_string(offenders.size() - shown) + " more";
    throw SchemaError(msg);
  }
  return dialogs;
}

json dialog_to_json(const Dialog& d) {
  json j;
  j["id"] = d.id;
  if (d.satisfaction) j["satisfaction"] = *d.satisfaction;
  if (d.curve) j["curve"] = *d.curve;
  json utts = json::array();
  for (const auto& u : d.utterances) {
    utts.push_back(json{{"text", join_tokens(u.tokens)},
                        {"speaker", u.speaker},
                        {"intent", u.intent},
                        {"emotion", u.emotion}});
  }
  j["utterances"] = std::move(utts);
  return j;
}

void write_interchange(std::ostream& out, std::span<const Dialog> dialogs) {
  for (const auto& d : dialogs) out << dialog_to_json(d).dump() << '\n';
}

void write_interchange(const std::filesystem::path& path, std::span<const Dialog> dialogs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_interchange(out, dialogs);
}

// ---- DailyDialog ----------------------------------------------------------

namespace {

std::vector<std::string> split_utterances(const std::string& line) {
  static constexpr std::string_view kEou = "__eou__";
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(kEou, start);
    const std::string piece = line.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    if (pos == std::string::npos) {
      if (piece.find_first_not_of(" \t\r") != std::string::npos) out.push_back(piece);
      break;
    }
    out.push_back(piece);
    start = pos + kEou.size();
  }
  return out;
}

std::vector<std::size_t> parse_ints(const std::string& line, std::size_t dialog, const char* what) {
  std::vector<std::size_t> out;
  for (const auto& tok : tokenize(line)) {
    std::size_t v = 0;
    try {
      std::size_t used = 0;
      const unsigned long parsed = std::stoul(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      v = parsed;
    } catch (const std::exception&) {
      throw AlignmentError(dialog, std::string("non-integer ") + what + " label '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::filesystem::path find_split_file(const std::filesystem::path& dir, std::string_view split,
                                      const std::string& name) {
  const auto nested = dir / std::string(split) / name;
  if (std::filesystem::exists(nested)) return nested;
  const auto flat = dir / name;
  if (std::filesystem::exists(flat)) return flat;
  throw DataError("DailyDialog file " + name + " not found under " + dir.string());
}

}  // namespace

std::vector<Dialog> load_dailydialog(const std::filesystem::path& dir, std::string_view split) {
  const std::string s(split);
  std::ifstream text(find_split_file(dir, split, "dialogues_" + s + ".txt"));
  std::ifstream emotion(find_split_file(dir, split, "dialogues_emotion_" + s + ".txt"));
  std::ifstream act(find_split_file(dir, split, "dialogues_act_" + s + ".txt"));
  if (!text || !emotion || !act) throw DataError("cannot open DailyDialog " + s + " files in " + dir.string());
  return load_dailydialog(text, emotion, act, split);
}

std::vector<Dialog> load_dailydialog(std::istream& text, std::istream& emotion, std::istream& act,
                                     std::string_view split) {
  const LabelSchema schema = LabelSchema::dailydialog();
  std::vector<Dialog> dialogs;
  std::string text_line, emotion_line, act_line;
  std::size_t index = 0;
  while (std::getline(text, text_line)) {
    if (text_line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (!std::getline(emotion, emotion_line)) throw AlignmentError(index, "emotion file ended early");
    if (!std::getline(act, act_line)) throw AlignmentError(index, "act file ended early");
    const auto pieces = split_utterances(text_line);
    const auto emotions = parse_ints(emotion_line, index, "emotion");
    const auto acts = parse_ints(act_line, index, "act");
    if (pieces.size() != emotions.size() || pieces.size() != acts.size()) {
      throw AlignmentError(index, std::to_string(pieces.size()) + " utterances, " +
                                      std::to_string(emotions.size()) + " emotion labels, " +
                                      std::to_string(acts.size()) + " act labels");
    }
    Dialog d;
    d.id = "dailydialog-" + std::string(split) + "-" + std::to_string(index);
    for (std::size_t k = 0; k < pieces.size(); ++k) {
      if (emotions[k] >= schema.emotions.size()) {
        throw AlignmentError(index, "emotion label " + std::to_string(emotions[k]) + " out of range 0-6");
      }
      if (acts[k] < 1 || acts[k] > schema.intents.size()) {
        throw AlignmentError(index, "act label " + std::to_string(acts[k]) + " out of range 1-4");
      }
      Utterance u;
      u.tokens = tokenize(pieces[k]);
      u.speaker = schema.speakers.at(k % 2);
      u.intent = schema.intents.at(acts[k] - 1);
      u.emotion = schema.emotions.at(emotions[k]);
      d.utterances.push_back(std::move(u));
    }
    if (d.utterances.empty()) throw AlignmentError(index, "dialog has no utterances");
    dialogs.push_back(std::move(d));
    ++index;
  }
  std::string extra;
  while (std::getline(emotion, extra)) {
    if (extra.find_first_not_of(" \t\r") != std::string::npos) {
      throw AlignmentError(index, "emotion file has more lines than the dialog file");
    }
  }
  while (std::getline(act, extra)) {
    if (extra.find_first_not_of(" \t\r") != std::string::npos) {
      throw AlignmentError(index, "act file has more lines than the dialog file");
    }
  }
  return dialogs;
}

// ---- encoding and batching ------------------------------------------------

bool UtteranceInput::is_padding() const {
  return std::none_of(mask.begin(), mask.end(), [](bool b) { return b; });
}

namespace {

std::size_t label_index(const LabelSet& set, const std::string& value, const char* what,
                        const std::string& where) {
  auto idx = set.find(value);
  if (!idx) throw SchemaError(where + ": unknown " + what + " '" + value + "'");
  return *idx;
}

}  // namespace

UtteranceInput encode_utterance(const Utterance& u, const Vocab& vocab, const LabelSchema& schema) {
  UtteranceInput in;
  for (const auto& t : u.tokens) in.word_indices.push_back(vocab.index(t));
  if (in.word_indices.empty()) in.word_indices.push_back(kUnkIndex);
  in.mask.assign(in.word_indices.size(), true);
  in.speaker_id = label_index(schema.speakers, u.speaker, "speaker", "utterance");
  in.intent_id = label_index(schema.intents, u.intent, "intent", "utterance");
  return in;
}

EncodedDialog encode_dialog(const Dialog& d, const Vocab& vocab, const LabelSchema& schema) {
  if (d.utterances.empty()) throw ContractError("dialog " + d.id + " has no utterances");
  EncodedDialog e;
  e.id = d.id;
  for (const auto& u : d.utterances) {
    e.utterances.push_back(encode_utterance(u, vocab, schema));
    e.gold.emotions.push_back(label_index(schema.emotions, u.emotion, "emotion", d.id));
  }
  if (d.satisfaction) e.gold.satisfaction = label_index(schema.satisfaction, *d.satisfaction, "satisfaction", d.id);
  if (d.curve) e.gold.curve = label_index(schema.curve, *d.curve, "curve", d.id);
  return e;
}

std::vector<EncodedDialog> encode_dialogs(std::span<const Dialog> dialogs, const Vocab& vocab,
                                          const LabelSchema& schema) {
  std::vector<EncodedDialog> out;
  out.reserve(dialogs.size());
  for (const auto& d : dialogs) out.push_back(encode_dialog(d, vocab, schema));
  return out;
}

PaddedDialog pad_dialog(const EncodedDialog& dialog, std::size_t max_utterances, std::size_t max_tokens) {
  if (dialog.utterances.size() > max_utterances) {
    throw ContractError("pad_dialog: dialog " + dialog.id + " is longer than the batch maximum");
  }
  PaddedDialog p;
  p.id = dialog.id;
  p.gold = dialog.gold;
  for (const auto& u : dialog.utterances) {
    if (u.length() > max_tokens) throw ContractError("pad_dialog: utterance longer than the batch maximum");
    UtteranceInput padded = u;
    padded.word_indices.resize(max_tokens, kPadIndex);
    padded.mask.resize(max_tokens, false);
    p.utterances.push_back(std::move(padded));
    p.utterance_mask.push_back(true);
  }
  while (p.utterances.size() < max_utterances) {
    UtteranceInput pad;
    pad.word_indices.assign(max_tokens, kPadIndex);
    pad.mask.assign(max_tokens, false);
    p.utterances.push_back(std::move(pad));
    p.utterance_mask.push_back(false);
  }
  p.gold.emotions.resize(max_utterances, 0);
  return p;
}

std::vector<PaddedBatch> batch_pad(std::span<const EncodedDialog> dialogs, std::size_t batch_size,
                                   std::uint64_t seed) {
  if (batch_size == 0) throw ContractError("batch_pad: batch_size must be positive");
  std::vector<std::size_t> order(dialogs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {0}));
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dialogs[a].utterances.size() < dialogs[b].utterances.size();
  });

  std::vector<PaddedBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    PaddedBatch batch;
    for (std::size_t i = start; i < end; ++i) {
      const auto& d = dialogs[order[i]];
      batch.max_utterances = std::max(batch.max_utterances, d.utterances.size());
      for (const auto& u : d.utterances) batch.max_tokens = std::max(batch.max_tokens, u.length());
    }
    for (std::size_t i = start; i < end; ++i) {
      batch.dialogs.push_back(pad_dialog(dialogs[order[i]], batch.max_utterances, batch.max_tokens));
    }
    batches.push_back(std::move(batch));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace chatcap
