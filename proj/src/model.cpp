#include "chatcap/model.hpp"

#include <algorithm>

#include "chatcap/error.hpp"
#include "chatcap/random.hpp"

namespace chatcap {

using nlohmann::json;

std::string to_string(Architecture a) {
  return a == Architecture::ChatCapsule ? "chat-capsule" : "lstm-baseline";
}

Architecture architecture_from_string(std::string_view s) {
  if (s == "chat-capsule") return Architecture::ChatCapsule;
  if (s == "lstm-baseline") return Architecture::LstmBaseline;
  throw ContractError("unknown architecture '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ContractError("vocab_size must include PAD and UNK");
  if (d_word == 0 || d_model == 0 || d_h == 0 || d_a == 0) throw ContractError("model dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ContractError("dropout must be in [0, 1)");
  for (const LabelSet* set : {&schema.emotions, &schema.satisfaction, &schema.curve, &schema.speakers, &schema.intents}) {
    if (set->empty()) throw ContractError("label schema '" + schema.name + "' has an empty label set");
  }
}

json ModelConfig::to_json() const {
  return json{{"architecture", to_string(architecture)},
              {"vocab_size", vocab_size},
              {"d_word", d_word},
              {"d_model", d_model},
              {"d_h", d_h},
              {"d_a", d_a},
              {"schema", schema.to_json()},
              {"dropout", dropout},
              {"use_rectifier", use_rectifier},
              {"use_feedback", use_feedback},
              {"bidirectional_utterance", bidirectional_utterance},
              {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  try {
    ModelConfig c;
    c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.d_word = j.at("d_word").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.d_h = j.at("d_h").get<std::size_t>();
    c.d_a = j.at("d_a").get<std::size_t>();
    c.schema = LabelSchema::from_json(j.at("schema"));
    c.dropout = j.at("dropout").get<double>();
    c.use_rectifier = j.at("use_rectifier").get<bool>();
    c.use_feedback = j.at("use_feedback").get<bool>();
    c.bidirectional_utterance = j.at("bidirectional_utterance").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed model config: ") + e.what());
  }
}

namespace {

std::vector<double> values_of(const Tensor& t) {
  return t.defined() ? t.to_vector() : std::vector<double>{};
}

}  // namespace

DialogPrediction DialogPrediction::from(const DialogForward& f) {
  DialogPrediction p;
  for (const auto& e : f.emotion) p.emotion.push_back(values_of(e));
  p.satisfaction = values_of(f.satisfaction);
  p.curve = values_of(f.curve);
  for (const auto& a : f.utterance_attention) p.utterance_attention.push_back(values_of(a));
  p.dialog_attention = values_of(f.dialog_attention);
  return p;
}

PaddedDialog unpadded(const EncodedDialog& dialog) {
  PaddedDialog p;
  p.id = dialog.id;
  p.utterances = dialog.utterances;
  p.utterance_mask.assign(dialog.utterances.size(), true);
  p.gold = dialog.gold;
  return p;
}

PaddedDialog unpadded(std::span<const UtteranceInput> utterances) {
  PaddedDialog p;
  p.utterances.assign(utterances.begin(), utterances.end());
  p.utterance_mask.assign(utterances.size(), true);
  return p;
}

// ---- DialogModel ----------------------------------------------------------

DialogModel::DialogModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
}

void DialogModel::set_word_vectors(const Tensor& table) {
  if (table.shape() != words_.table.shape()) {
    throw DimensionError("word vectors " + shape_str(table.shape()) + " do not match embedding table " +
                         shape_str(words_.table.shape()));
  }
  auto dst = words_.table.mutable_data();
  std::copy(table.data().begin(), table.data().end(), dst.begin());
  for (std::size_t c = 0; c < config_.d_word; ++c) dst[kPadIndex * config_.d_word + c] = 0.0;
}

DialogForward DialogModel::forward(Tape& tape, const EncodedDialog& dialog, const ForwardOptions& options) const {
  return forward(tape, unpadded(dialog), options);
}

DialogPrediction DialogModel::predict(const EncodedDialog& dialog) const {
  Tape tape(false);
  return DialogPrediction::from(forward(tape, dialog, {}));
}

void DialogModel::check_utterance(const UtteranceInput& u) const {
  if (u.word_indices.empty()) throw ContractError("utterance has no token positions");
  if (u.mask.size() != u.word_indices.size()) throw ContractError("utterance mask length differs from token count");
  if (u.is_padding()) throw InvalidMaskError("real utterance has no unmasked token");
  for (std::size_t t = 0; t < u.word_indices.size(); ++t) {
    if (u.mask[t] && u.word_indices[t] >= config_.vocab_size) {
      throw BoundsError("word index " + std::to_string(u.word_indices[t]) + " outside vocabulary of " +
                        std::to_string(config_.vocab_size));
    }
  }
  if (u.speaker_id >= config_.schema.speakers.size()) {
    throw BoundsError("speaker id " + std::to_string(u.speaker_id) + " out of range");
  }
  if (u.intent_id >= config_.schema.intents.size()) {
    throw BoundsError("intent id " + std::to_string(u.intent_id) + " out of range");
  }
}

Tensor DialogModel::word_vector(Tape& tape, std::size_t index, const InputProjection* projection,
                                const ForwardOptions& options, std::mt19937_64& rng) const {
  Tensor w = words_.lookup_row(tape, index);
  if (projection != nullptr) w = projection->apply(tape, w);
  if (options.training) w = dropout(tape, w, config_.dropout, rng);
  return w;
}

// ---- Chat-Capsule ---------------------------------------------------------

ChatCapsuleModel::ChatCapsuleModel(ModelConfig config) : DialogModel(std::move(config)) {
  const ModelConfig& c = config_;
  std::mt19937_64 rng(derive_seed(c.seed, {1}));
  words_.table = params_.add_uniform("word.embedding", {c.vocab_size, c.d_word}, 0.1, rng, kWordVectorGroup);
  words_.pad_row = kPadIndex;
  for (std::size_t k = 0; k < c.d_word; ++k) words_.table.mutable_data()[kPadIndex * c.d_word + k] = 0.0;
  projection_.weight = params_.add_uniform("word.projection", {c.d_model, c.d_word}, rng);
  speakers_ = params_.add_uniform("profile.speaker", {c.schema.speakers.size(), c.d_model}, 0.1, rng);
  intents_ = params_.add_uniform("profile.intent", {c.schema.intents.size(), c.d_model}, 0.1, rng);

  UtteranceCapsule::Options u;
  u.d_model = c.d_model;
  u.d_h = c.d_h;
  u.d_a = c.d_a;
  u.num_emotions = c.schema.emotions.size();
  u.feedback_dim = c.d_h;
  u.bidirectional = c.bidirectional_utterance;
  u.use_rectifier = c.use_rectifier;
  u.use_feedback = c.use_feedback;
  utterance_ = std::make_unique<UtteranceCapsule>(u, params_, rng);

  DialogCapsule::Options d;
  d.utterance_dim = utterance_->state_dim();
  d.d_model = c.d_model;
  d.d_h = c.d_h;
  d.num_satisfaction = c.schema.satisfaction.size();
  d.num_curve = c.schema.curve.size();
  dialog_ = std::make_unique<DialogCapsule>(d, params_, rng);
}

ChatCapsuleModel::UtteranceStep ChatCapsuleModel::step(Tape& tape, const UtteranceInput& u,
                                                       const DialogState& state, const ForwardOptions& options,
                                                       std::size_t position) const {
  check_utterance(u);
  std::mt19937_64 rng(derive_seed(options.dropout_seed, {position}));
  UtteranceStep out;
  out.speaker = row(tape, speakers_, u.speaker_id);
  out.intent = row(tape, intents_, u.intent_id);
  std::vector<Tensor> words(u.length());
  for (std::size_t t = 0; t < u.length(); ++t) {
    if (u.mask[t]) words[t] = word_vector(tape, u.word_indices[t], &projection_, options, rng);
  }
  out.encoding = utterance_->encode(tape, words, u.mask, out.speaker, out.intent);
  out.emotion = softmax(tape, utterance_->emotion_logits(tape, out.encoding.representation, state.lstm.h));
  out.next_state = dialog_->step(tape, state, out.encoding.representation, out.speaker, out.intent);
  return out;
}

DialogForward ChatCapsuleModel::forward(Tape& tape, const PaddedDialog& dialog, const ForwardOptions& options) const {
  const std::size_t length = dialog.utterances.size();
  if (length == 0 || dialog.utterance_mask.size() != length) throw ContractError("forward on an empty dialog");
  if (std::none_of(dialog.utterance_mask.begin(), dialog.utterance_mask.end(), [](bool b) { return b; })) {
    throw ContractError("forward on a dialog made only of padding");
  }
  DialogForward out;
  out.utterance_mask = dialog.utterance_mask;
  out.emotion.resize(length);
  out.utterance_attention.resize(length);
  std::vector<Tensor> states(length);
  DialogState state = dialog_->initial_state();
  for (std::size_t i = 0; i < length; ++i) {
    if (dialog.utterance_mask[i]) {
      UtteranceStep s = step(tape, dialog.utterances[i], state, options, i);
      out.emotion[i] = s.emotion;
      out.utterance_attention[i] = s.encoding.attention;
      state = s.next_state;
    }
    states[i] = state.lstm.h;
  }
  const DialogEncoding enc = dialog_->attend(tape, states, dialog.utterance_mask);
  out.dialog_attention = enc.attention;
  const DialogHeads heads = dialog_->heads(tape, enc.representation);
  out.satisfaction = heads.satisfaction;
  out.curve = heads.curve;
  return out;
}

// ---- streaming ------------------------------------------------------------

StreamSession::StreamSession(const ChatCapsuleModel& model)
    : model_(&model), state_(model.dialog_capsule().initial_state()) {}

StreamSession::Output StreamSession::push(const UtteranceInput& utterance) {
  Tape tape(false);
  auto s = model_->step(tape, utterance, state_, {}, state_.step);
  state_ = s.next_state;
  states_.push_back(state_.lstm.h);

  const DialogEncoding enc = model_->dialog_capsule().attend(tape, states_, std::vector<bool>(states_.size(), true));
  const DialogHeads heads = model_->dialog_capsule().heads(tape, enc.representation);
  return {s.emotion.to_vector(), s.encoding.attention.to_vector(), heads.satisfaction.to_vector(),
          heads.curve.to_vector()};
}

StreamSession::Output StreamSession::push(std::size_t position, const UtteranceInput& utterance) {
  if (position != state_.step) {
    throw UsageError("stream expected utterance " + std::to_string(state_.step) + ", got " + std::to_string(position));
  }
  return push(utterance);
}

void StreamSession::reset() {
  state_ = model_->dialog_capsule().initial_state();
  states_.clear();
}

// ---- baseline -------------------------------------------------------------

LstmBaselineModel::LstmBaselineModel(ModelConfig config) : DialogModel(std::move(config)) {
  const ModelConfig& c = config_;
  std::mt19937_64 rng(derive_seed(c.seed, {2}));
  words_.table = params_.add_uniform("word.embedding", {c.vocab_size, c.d_word}, 0.1, rng, kWordVectorGroup);
  words_.pad_row = kPadIndex;
  for (std::size_t k = 0; k < c.d_word; ++k) words_.table.mutable_data()[kPadIndex * c.d_word + k] = 0.0;
  utterance_rnn_ = LstmParams::create(params_, "baseline.utterance_rnn", c.d_word, c.d_h, rng);
  w_emotion_ = params_.add_uniform("baseline.emotion.weight", {c.schema.emotions.size(), c.d_h}, rng);
  b_emotion_ = params_.add_zeros("baseline.emotion.bias", {c.schema.emotions.size()});
  dialog_rnn_ = LstmParams::create(params_, "baseline.dialog_rnn", c.d_h, c.d_h, rng);
  w_satisfaction_ = params_.add_uniform("baseline.satisfaction.weight", {c.schema.satisfaction.size(), c.d_h}, rng);
  b_satisfaction_ = params_.add_zeros("baseline.satisfaction.bias", {c.schema.satisfaction.size()});
  w_curve_ = params_.add_uniform("baseline.curve.weight", {c.schema.curve.size(), c.d_h}, rng);
  b_curve_ = params_.add_zeros("baseline.curve.bias", {c.schema.curve.size()});
}

DialogForward LstmBaselineModel::forward(Tape& tape, const PaddedDialog& dialog, const ForwardOptions& options) const {
  const std::size_t length = dialog.utterances.size();
  if (length == 0 || dialog.utterance_mask.size() != length) throw ContractError("forward on an empty dialog");
  if (std::none_of(dialog.utterance_mask.begin(), dialog.utterance_mask.end(), [](bool b) { return b; })) {
    throw ContractError("forward on a dialog made only of padding");
  }
  DialogForward out;
  out.utterance_mask = dialog.utterance_mask;
  out.emotion.resize(length);
  out.utterance_attention.resize(length);
  LstmState dialog_state = LstmState::zeros(config_.d_h);
  for (std::size_t i = 0; i < length; ++i) {
    if (!dialog.utterance_mask[i]) continue;
    const UtteranceInput& u = dialog.utterances[i];
    check_utterance(u);
    std::mt19937_64 rng(derive_seed(options.dropout_seed, {i}));
    LstmState state = LstmState::zeros(config_.d_h);
    for (std::size_t t = 0; t < u.length(); ++t) {
      if (!u.mask[t]) continue;
      state = lstm_cell(tape, word_vector(tape, u.word_indices[t], nullptr, options, rng), state, utterance_rnn_);
    }
    out.emotion[i] = softmax(tape, add(tape, matvec(tape, w_emotion_, state.h), b_emotion_));
    dialog_state = lstm_cell(tape, state.h, dialog_state, dialog_rnn_);
  }
  out.satisfaction = softmax(tape, add(tape, matvec(tape, w_satisfaction_, dialog_state.h), b_satisfaction_));
  out.curve = softmax(tape, add(tape, matvec(tape, w_curve_, dialog_state.h), b_curve_));
  return out;
}

std::unique_ptr<DialogModel> make_model(const ModelConfig& config) {
  if (config.architecture == Architecture::ChatCapsule) return std::make_unique<ChatCapsuleModel>(config);
  return std::make_unique<LstmBaselineModel>(config);
}

// ---- objective ------------------------------------------------------------

LossTerms loss_total(Tape& tape, std::span<const DialogForward> predictions, std::span<const DialogGold> gold) {
  if (predictions.size() != gold.size()) throw ContractError("loss_total: predictions and gold differ in length");
  LossTerms terms;
  Tensor utterance_sum, satisfaction_sum, curve_sum;
  auto accumulate = [&](Tensor& acc, const Tensor& term) { acc = acc.defined() ? add(tape, acc, term) : term; };

  for (std::size_t d = 0; d < predictions.size(); ++d) {
    const DialogForward& p = predictions[d];
    const DialogGold& g = gold[d];
    for (std::size_t i = 0; i < p.emotion.size(); ++i) {
      if (!p.utterance_mask[i]) continue;
      if (i >= g.emotions.size()) throw ContractError("loss_total: missing gold emotion");
      accumulate(utterance_sum, cross_entropy(tape, p.emotion[i], g.emotions[i]));
      ++terms.utterances;
    }
    if (g.satisfaction) {
      accumulate(satisfaction_sum, cross_entropy(tape, p.satisfaction, *g.satisfaction));
      ++terms.satisfaction_dialogs;
    }
    if (g.curve) {
      accumulate(curve_sum, cross_entropy(tape, p.curve, *g.curve));
      ++terms.curve_dialogs;
    }
  }
  if (terms.utterances == 0) throw ContractError("loss_total: batch has no real utterances");

  terms.utterance = scale(tape, utterance_sum, 1.0 / static_cast<double>(terms.utterances));
  if (satisfaction_sum.defined()) {
    terms.dialog = scale(tape, satisfaction_sum, 1.0 / static_cast<double>(terms.satisfaction_dialogs));
  }
  if (curve_sum.defined()) {
    Tensor c = scale(tape, curve_sum, 1.0 / static_cast<double>(terms.curve_dialogs));
    terms.dialog = terms.dialog.defined() ? add(tape, terms.dialog, c) : c;
  }
  terms.total = terms.dialog.defined() ? add(tape, terms.utterance, terms.dialog) : terms.utterance;
  return terms;
}

}  // namespace chatcap
