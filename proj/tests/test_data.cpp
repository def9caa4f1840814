#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "chatcap/error.hpp"
#include "chatcap/synthetic.hpp"

using namespace chatcap;

namespace {

const LabelSchema kCs = LabelSchema::customer_service();

std::vector<Dialog> parse(const std::string& text, const LabelSchema& schema = kCs) {
  std::istringstream in(text);
  return parse_interchange(in, "mem", schema);
}

// Straight-line restatement of the planted rules.
int valence_oracle(const std::string& e) {
  static const std::map<std::string, int> table{{"Anger", -1},    {"Dissatisfaction", -1}, {"Worry", -1},
                                                {"Emotionlessness", 0}, {"Happiness", 1},      {"Comfort", 1}};
  return table.at(e);
}

std::string satisfaction_oracle(const std::vector<int>& v) {
  int s = 0;
  for (std::size_t i = v.size() >= 3 ? v.size() - 3 : 0; i < v.size(); ++i) s += v[i];
  return s < 0 ? "Negative" : s > 0 ? "Positive" : "Neutral";
}

std::string curve_oracle(const std::vector<int>& v) {
  bool up = true, down = true, same = true;
  for (std::size_t i = 1; i < v.size(); ++i) {
    up = up && v[i] >= v[i - 1];
    down = down && v[i] <= v[i - 1];
    same = same && v[i] == v[0];
  }
  if (same) return "Still";
  if (up) return "Up";
  if (down) return "Down";
  const int a = v.front(), b = v.back();
  int below = 0, above = 0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    below += v[i] < a && v[i] < b;
    above += v[i] > a && v[i] > b;
  }
  if (below && !above) return "Concave";
  if (above && !below) return "Convex";
  return b > a ? "Up" : b < a ? "Down" : "Still";
}

}  // namespace

TEST(Tokenize, SplitsOnWhitespaceOnly) {
  EXPECT_EQ(tokenize("Hello, World!\t It's  fine"),
            (std::vector<std::string>{"Hello,", "World!", "It's", "fine"}));
  EXPECT_TRUE(tokenize("   ").empty());
}

TEST(Interchange, ParsesDialog) {
  const auto ds = parse(
      R"({"id":"a","satisfaction":"Positive","curve":"Up","utterances":[)"
      R"({"text":"my order is late","speaker":"User","intent":"Complaint","emotion":"Worry"},)"
      R"({"text":"Sorry!","speaker":"Staff","intent":"Apology","emotion":"Comfort"}]})"
      "\n\n");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].id, "a");
  EXPECT_EQ(ds[0].satisfaction, "Positive");
  EXPECT_EQ(ds[0].curve, "Up");
  EXPECT_EQ(ds[0].utterances[0].tokens, (std::vector<std::string>{"my", "order", "is", "late"}));
  EXPECT_EQ(ds[0].utterances[1].tokens, (std::vector<std::string>{"Sorry!"}));
  EXPECT_EQ(ds[0].utterances[1].speaker, "Staff");
}

TEST(Interchange, DialogLabelsAreOptional) {
  const auto ds = parse(R"({"id":"b","utterances":[{"text":"hi","speaker":"User","intent":"Greeting",)"
                        R"("emotion":"Emotionlessness"}]})");
  EXPECT_FALSE(ds[0].satisfaction);
  EXPECT_FALSE(ds[0].curve);
}

TEST(Interchange, MissingEmotionIsSchemaError) {
  EXPECT_THROW(parse(R"({"id":"c","utterances":[{"text":"hi","speaker":"User","intent":"Greeting"}]})"),
               SchemaError);
}

TEST(Interchange, UnknownLabelsAreListed) {
  try {
    parse(R"({"id":"c","utterances":[{"text":"hi","speaker":"Bot","intent":"Greeting","emotion":"Glee"}]})");
    FAIL();
  } catch (const SchemaError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'Bot'"), std::string::npos);
    EXPECT_NE(msg.find("'Glee'"), std::string::npos);
  }
}

TEST(Interchange, MalformedLineReportsLineNumber) {
  const std::string good =
      R"({"id":"a","utterances":[{"text":"x","speaker":"User","intent":"Greeting","emotion":"Worry"}]})";
  try {
    parse(good + "\n" + good + "\n{\"id\": oops\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("mem:3"), std::string::npos);
  }
}

TEST(Interchange, EmptyUtteranceListIsSchemaError) {
  EXPECT_THROW(parse(R"({"id":"e","utterances":[]})"), SchemaError);
}

TEST(Interchange, RoundTripsSyntheticCorpus) {
  const auto dialogs = gen_synthetic(50, 4, kCs);
  std::stringstream s;
  write_interchange(s, dialogs);
  const auto back = parse_interchange(s, "mem", kCs);
  EXPECT_EQ(back, dialogs);
}

TEST(DailyDialog, ParsesExampleLine) {
  std::istringstream text("Hello ! __eou__ Hi . __eou__\n"), emotion("0 4\n"), act("1 1\n");
  const auto ds = load_dailydialog(text, emotion, act, "train");
  ASSERT_EQ(ds.size(), 1u);
  ASSERT_EQ(ds[0].utterances.size(), 2u);
  EXPECT_EQ(ds[0].utterances[0].tokens, (std::vector<std::string>{"Hello", "!"}));
  EXPECT_EQ(ds[0].utterances[0].emotion, "neutral");
  EXPECT_EQ(ds[0].utterances[1].emotion, "happiness");
  EXPECT_EQ(ds[0].utterances[0].speaker, "A");
  EXPECT_EQ(ds[0].utterances[1].speaker, "B");
  EXPECT_EQ(ds[0].utterances[0].intent, "inform");
  EXPECT_FALSE(ds[0].satisfaction);
}

TEST(DailyDialog, MisalignedCountsNameDialog) {
  std::istringstream text("a __eou__\nb __eou__ c __eou__\n"), emotion("0\n0\n"), act("1\n1 1\n");
  try {
    load_dailydialog(text, emotion, act, "train");
    FAIL();
  } catch (const AlignmentError& e) {
    EXPECT_EQ(e.dialog_index(), 1u);
  }
  std::istringstream t2("a __eou__\n"), e2("9\n"), a2("1\n");
  EXPECT_THROW(load_dailydialog(t2, e2, a2, "train"), AlignmentError);
  std::istringstream t3("a __eou__\n"), e3("0\n0\n"), a3("1\n");
  EXPECT_THROW(load_dailydialog(t3, e3, a3, "train"), AlignmentError);
}

TEST(DailyDialog, MissingDirectoryIsDataError) {
  EXPECT_THROW(load_dailydialog("/nonexistent/dailydialog", "train"), DataError);
}

TEST(Encode, MapsTokensAndLabels) {
  const Vocab vocab = Vocab::from_tokens({"<pad>", "<unk>", "order", "late"});
  Dialog d{"x", {{{"order", "very", "late"}, "Staff", "Thanks", "Comfort"}, {{}, "User", "Inquiry", "Anger"}},
           "Negative", std::nullopt};
  const EncodedDialog e = encode_dialog(d, vocab, kCs);
  EXPECT_EQ(e.utterances[0].word_indices, (std::vector<std::size_t>{2, kUnkIndex, 3}));
  EXPECT_EQ(e.utterances[0].speaker_id, 1u);
  EXPECT_EQ(e.utterances[0].intent_id, 6u);
  EXPECT_EQ(e.utterances[1].word_indices, (std::vector<std::size_t>{kUnkIndex}));
  EXPECT_EQ(e.gold.emotions, (std::vector<std::size_t>{5, 0}));
  EXPECT_EQ(e.gold.satisfaction, 0u);
  EXPECT_FALSE(e.gold.curve);
}

TEST(Batching, MasksMarkPadding) {
  const Vocab vocab = Vocab::from_tokens({"<pad>", "<unk>", "w"});
  std::vector<EncodedDialog> ds;
  for (std::size_t n : {2, 5}) {
    Dialog d;
    d.id = std::to_string(n);
    for (std::size_t i = 0; i < n; ++i) d.utterances.push_back({std::vector<std::string>(i + 1, "w"), "User", "Inquiry", "Worry"});
    ds.push_back(encode_dialog(d, vocab, kCs));
  }
  const auto batches = batch_pad(ds, 2, 1);
  ASSERT_EQ(batches.size(), 1u);
  const auto& b = batches[0];
  EXPECT_EQ(b.max_utterances, 5u);
  EXPECT_EQ(b.max_tokens, 5u);
  std::size_t masked = 0;
  for (const auto& d : b.dialogs) {
    masked += std::count(d.utterance_mask.begin(), d.utterance_mask.end(), false);
    for (std::size_t i = 0; i < 5; ++i) {
      const auto& u = d.utterances[i];
      EXPECT_EQ(u.length(), 5u);
      const auto real = static_cast<std::size_t>(std::count(u.mask.begin(), u.mask.end(), true));
      EXPECT_EQ(real, d.utterance_mask[i] ? i + 1 : 0u);
      for (std::size_t t = real; t < 5; ++t) EXPECT_EQ(u.word_indices[t], kPadIndex);
    }
  }
  EXPECT_EQ(masked, 3u);
}

TEST(Batching, CoversEveryDialogOnceAndIsSeeded) {
  const auto raw = gen_synthetic(77, 2, kCs);
  std::vector<std::vector<std::string>> corpus;
  for (const auto& d : raw)
    for (const auto& u : d.utterances) corpus.push_back(u.tokens);
  const auto ds = encode_dialogs(raw, build_vocab(corpus, 1), kCs);
  const auto a = batch_pad(ds, 8, 5), b = batch_pad(ds, 8, 5), c = batch_pad(ds, 8, 6);
  std::multiset<std::string> ids;
  std::vector<std::string> order_a, order_b, order_c;
  for (const auto& batch : a) {
    EXPECT_LE(batch.dialogs.size(), 8u);
    for (const auto& d : batch.dialogs) {
      ids.insert(d.id);
      order_a.push_back(d.id);
    }
  }
  for (const auto& batch : b)
    for (const auto& d : batch.dialogs) order_b.push_back(d.id);
  for (const auto& batch : c)
    for (const auto& d : batch.dialogs) order_c.push_back(d.id);
  EXPECT_EQ(ids.size(), 77u);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 77u);
  EXPECT_EQ(order_a, order_b);
  EXPECT_NE(order_a, order_c);
  EXPECT_THROW(batch_pad(ds, 0, 1), ContractError);
}

// ---- planted-label generator ----------------------------------------------

TEST(Synthetic, LabelsAgreeWithRuleOracle) {
  const auto ds = gen_synthetic(1000, 9, kCs);
  std::set<std::string> curves;
  for (const auto& d : ds) {
    std::vector<int> v;
    for (const auto& u : d.utterances)
      if (u.speaker == "User") v.push_back(valence_oracle(u.emotion));
    ASSERT_FALSE(v.empty());
    EXPECT_EQ(*d.satisfaction, satisfaction_oracle(v)) << d.id;
    EXPECT_EQ(*d.curve, curve_oracle(v)) << d.id;
    curves.insert(*d.curve);
    EXPECT_GE(d.utterances.size(), 4u);
    EXPECT_LE(d.utterances.size(), 10u);
  }
  EXPECT_EQ(curves.size(), 5u);
}

TEST(Synthetic, RuleExamples) {
  const std::vector<int> flat{0, 0, 0}, rising{-1, -1, 0, 1, 1}, dip{1, -1, 0}, single{1};
  EXPECT_EQ(satisfaction_from_valences(flat), "Neutral");
  EXPECT_EQ(curve_from_valences(flat), "Still");
  EXPECT_EQ(satisfaction_from_valences(rising), "Positive");
  EXPECT_EQ(curve_from_valences(rising), "Up");
  EXPECT_EQ(curve_from_valences(dip), "Concave");
  EXPECT_EQ(curve_from_valences(single), "Still");
  EXPECT_EQ(satisfaction_from_valences(dip), "Neutral");
  EXPECT_THROW(curve_from_valences(std::vector<int>{}), ContractError);
}

TEST(Synthetic, FillerOnlyUtterancesRepeatSpeakerEmotion) {
  const auto ds = gen_synthetic(400, 3, kCs);
  // Filler words are the tokens seen under every emotion.
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& d : ds)
    for (const auto& u : d.utterances)
      for (const auto& t : u.tokens) seen[t].insert(u.emotion);
  std::set<std::string> filler;
  for (const auto& [t, emotions] : seen)
    if (emotions.size() == 6) filler.insert(t);
  EXPECT_EQ(filler.size(), 16u);

  std::size_t ambiguous = 0, total = 0;
  for (const auto& d : ds) {
    std::map<std::string, std::string> previous;
    for (const auto& u : d.utterances) {
      ++total;
      const bool only_filler =
          std::all_of(u.tokens.begin(), u.tokens.end(), [&](const std::string& t) { return filler.count(t) > 0; });
      if (only_filler) {
        ++ambiguous;
        ASSERT_TRUE(previous.count(u.speaker)) << d.id;
        EXPECT_EQ(previous[u.speaker], u.emotion) << d.id;
      }
      previous[u.speaker] = u.emotion;
    }
  }
  EXPECT_GT(ambiguous, total / 10);
}

TEST(Synthetic, DeterministicAndSchemaChecked) {
  EXPECT_EQ(gen_synthetic(20, 1, kCs), gen_synthetic(20, 1, kCs));
  EXPECT_NE(gen_synthetic(20, 1, kCs), gen_synthetic(20, 2, kCs));
  EXPECT_EQ(gen_synthetic(3, 8, kCs)[2].id, "syn-8-2");
  EXPECT_THROW(gen_synthetic(1, 1, LabelSchema::dailydialog()), ContractError);
}

TEST(Schema, JsonRoundTripAndLookup) {
  EXPECT_EQ(LabelSchema::from_json(kCs.to_json()), kCs);
  EXPECT_EQ(LabelSchema::by_name("dailydialog").emotions.size(), 7u);
  EXPECT_THROW(LabelSchema::by_name("movies"), SchemaError);
  EXPECT_THROW(LabelSet({"a", "a"}), SchemaError);
}
