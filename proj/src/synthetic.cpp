#include "chatcap/synthetic.hpp"

#include <algorithm>
#include <array>
#include <random>

#include "chatcap/error.hpp"
#include "chatcap/random.hpp"

namespace chatcap {

namespace {

// Indexed like the customer-service emotion set.
const std::array<std::vector<std::string>, 6> kKeywords = {{
    {"furious", "outrageous", "ridiculous", "unacceptable", "angry", "shouting", "terrible", "disgusting"},
    {"disappointed", "slow", "useless", "unhappy", "broken", "poor", "annoying", "mediocre"},
    {"worried", "afraid", "nervous", "uncertain", "anxious", "risky", "concerned", "urgent"},
    {"order", "number", "address", "account", "invoice", "date", "tracking", "record"},
    {"great", "wonderful", "excellent", "happy", "perfect", "awesome", "glad", "delighted"},
    {"relieved", "reassured", "calm", "fine", "settled", "resolved", "safe", "comfortable"},
}};

const std::vector<std::string> kFiller = {"the", "a", "i", "you", "it", "is", "my", "please", "about",
                                          "this", "that", "we", "can", "will", "with", "for"};

enum Intent : std::size_t { Greeting, Inquiry, Complaint, Request, Explanation, Apology, Thanks };

constexpr std::size_t kUser = 0;
constexpr std::size_t kStaff = 1;
constexpr std::size_t kEmotionless = 3;

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

bool chance(std::mt19937_64& rng, double p) { return std::bernoulli_distribution(p)(rng); }

int pick_valence(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::vector<int> plan_valences(std::mt19937_64& rng, std::size_t k, std::string_view curve) {
  std::vector<int> v(k);
  if (curve == "Still") {
    std::fill(v.begin(), v.end(), pick_valence(rng, -1, 1));
  } else if (curve == "Up" || curve == "Down") {
    do {
      for (auto& x : v) x = pick_valence(rng, -1, 1);
      std::sort(v.begin(), v.end());
    } while (v.front() == v.back());
    if (curve == "Down") std::reverse(v.begin(), v.end());
  } else if (curve == "Concave") {
    v.front() = pick_valence(rng, 0, 1);
    v.back() = pick_valence(rng, 0, 1);
    const int lo = std::min(v.front(), v.back());
    for (std::size_t i = 1; i + 1 < k; ++i) v[i] = pick_valence(rng, -1, lo);
    v[1 + pick(rng, k - 2)] = pick_valence(rng, -1, lo - 1);
  } else {
    v.front() = pick_valence(rng, -1, 0);
    v.back() = pick_valence(rng, -1, 0);
    const int hi = std::max(v.front(), v.back());
    for (std::size_t i = 1; i + 1 < k; ++i) v[i] = pick_valence(rng, hi, 1);
    v[1 + pick(rng, k - 2)] = pick_valence(rng, hi + 1, 1);
  }
  return v;
}

std::size_t emotion_for_valence(std::mt19937_64& rng, int valence) {
  if (valence < 0) return pick(rng, 3);
  if (valence == 0) return kEmotionless;
  return 4 + pick(rng, 2);
}

std::size_t staff_emotion(std::mt19937_64& rng) {
  static const std::array<std::size_t, 8> choices = {3, 3, 3, 3, 5, 5, 4, 2};
  return choices[pick(rng, choices.size())];
}

std::size_t intent_for(std::mt19937_64& rng, std::size_t speaker, std::size_t emotion) {
  if (speaker == kStaff) {
    static const std::array<Intent, 4> staff = {Explanation, Apology, Greeting, Thanks};
    return staff[pick(rng, staff.size())];
  }
  const int v = emotion_valence(LabelSchema::customer_service().emotions.at(emotion));
  if (v < 0) {
    static const std::array<Intent, 3> negative = {Complaint, Request, Inquiry};
    return negative[pick(rng, negative.size())];
  }
  if (v == 0) {
    static const std::array<Intent, 3> neutral = {Inquiry, Request, Greeting};
    return neutral[pick(rng, neutral.size())];
  }
  static const std::array<Intent, 2> positive = {Thanks, Greeting};
  return positive[pick(rng, positive.size())];
}

std::vector<std::string> utterance_tokens(std::mt19937_64& rng, std::size_t emotion, bool ambiguous) {
  std::vector<std::string> tokens;
  if (!ambiguous) {
    const std::size_t n_keywords = 1 + pick(rng, 2);
    for (std::size_t k = 0; k < n_keywords; ++k) tokens.push_back(kKeywords[emotion][pick(rng, kKeywords[emotion].size())]);
  }
  const std::size_t n_filler = (ambiguous ? 3 : 2) + pick(rng, 4);
  for (std::size_t k = 0; k < n_filler; ++k) tokens.push_back(kFiller[pick(rng, kFiller.size())]);
  std::shuffle(tokens.begin(), tokens.end(), rng);
  return tokens;
}

}  // namespace

int emotion_valence(std::string_view emotion) {
  if (emotion == "Anger" || emotion == "Dissatisfaction" || emotion == "Worry") return -1;
  if (emotion == "Emotionlessness") return 0;
  if (emotion == "Happiness" || emotion == "Comfort") return 1;
  throw ContractError("no valence for emotion '" + std::string(emotion) + "'");
}

std::string satisfaction_from_valences(std::span<const int> user_valences) {
  if (user_valences.empty()) throw ContractError("satisfaction needs at least one User utterance");
  const std::size_t n = std::min<std::size_t>(3, user_valences.size());
  int total = 0;
  for (std::size_t i = user_valences.size() - n; i < user_valences.size(); ++i) total += user_valences[i];
  if (total < 0) return "Negative";
  if (total > 0) return "Positive";
  return "Neutral";
}

std::string curve_from_valences(std::span<const int> v) {
  if (v.empty()) throw ContractError("curve needs at least one User utterance");
  const bool constant = std::all_of(v.begin(), v.end(), [&](int x) { return x == v.front(); });
  if (constant) return "Still";
  if (std::is_sorted(v.begin(), v.end())) return "Up";
  if (std::is_sorted(v.begin(), v.end(), std::greater<>())) return "Down";
  const int lo = std::min(v.front(), v.back());
  const int hi = std::max(v.front(), v.back());
  const auto interior = v.subspan(1, v.size() - 2);
  const bool dip = std::any_of(interior.begin(), interior.end(), [&](int x) { return x < lo; });
  const bool bump = std::any_of(interior.begin(), interior.end(), [&](int x) { return x > hi; });
  if (dip && !bump) return "Concave";
  if (bump && !dip) return "Convex";
  if (v.back() > v.front()) return "Up";
  if (v.back() < v.front()) return "Down";
  return "Still";
}

std::vector<Dialog> gen_synthetic(std::size_t n_dialogs, std::uint64_t seed, const LabelSchema& schema,
                                  const SyntheticOptions& options) {
  const LabelSchema cs = LabelSchema::customer_service();
  if (schema != cs) throw ContractError("synthetic generator requires the customer-service schema");
  if (options.min_utterances < 3 || options.max_utterances < options.min_utterances) {
    throw ContractError("synthetic dialogs need 3 <= min_utterances <= max_utterances");
  }

  std::vector<Dialog> dialogs;
  dialogs.reserve(n_dialogs);
  for (std::size_t d = 0; d < n_dialogs; ++d) {
    std::mt19937_64 rng(derive_seed(seed, {d}));
    const std::string target = cs.curve.at(pick(rng, cs.curve.size()));
    const std::size_t min_users = (target == "Concave" || target == "Convex") ? 3 : (target == "Still" ? 1 : 2);

    std::vector<std::size_t> speakers;
    std::size_t users = 0;
    do {
      const std::size_t length =
          options.min_utterances + pick(rng, options.max_utterances - options.min_utterances + 1);
      speakers.assign(1, kUser);
      for (std::size_t i = 1; i < length; ++i) {
        speakers.push_back(chance(rng, options.repeat_speaker) ? speakers.back() : 1 - speakers.back());
      }
      users = static_cast<std::size_t>(std::count(speakers.begin(), speakers.end(), kUser));
    } while (users < min_users);

    const std::vector<int> plan = plan_valences(rng, users, target);

    Dialog dialog;
    dialog.id = "syn-" + std::to_string(seed) + "-" + std::to_string(d);
    std::array<std::optional<std::size_t>, 2> previous;
    std::vector<int> user_valences;
    for (std::size_t i = 0; i < speakers.size(); ++i) {
      const std::size_t speaker = speakers[i];
      std::size_t emotion;
      if (speaker == kUser) {
        const int v = plan[user_valences.size()];
        const bool sticky = previous[kUser] && emotion_valence(cs.emotions.at(*previous[kUser])) == v;
        emotion = sticky && chance(rng, 0.7) ? *previous[kUser] : emotion_for_valence(rng, v);
        user_valences.push_back(v);
      } else {
        emotion = previous[kStaff] && chance(rng, 0.6) ? *previous[kStaff] : staff_emotion(rng);
      }
      const bool ambiguous = previous[speaker] == emotion && chance(rng, options.ambiguous);

      Utterance u;
      u.tokens = utterance_tokens(rng, emotion, ambiguous);
      u.speaker = cs.speakers.at(speaker);
      u.intent = cs.intents.at(intent_for(rng, speaker, emotion));
      u.emotion = cs.emotions.at(emotion);
      dialog.utterances.push_back(std::move(u));
      previous[speaker] = emotion;
    }
    dialog.satisfaction = satisfaction_from_valences(user_valences);
    dialog.curve = curve_from_valences(user_valences);
    dialogs.push_back(std::move(dialog));
  }
  return dialogs;
}

}  // namespace chatcap
