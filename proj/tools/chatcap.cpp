// chatcap: train, evaluate and stream predictions from dialog emotion models.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "chatcap/checkpoint.hpp"
#include "chatcap/data.hpp"
#include "chatcap/embed.hpp"
#include "chatcap/error.hpp"
#include "chatcap/gradcheck.hpp"
#include "chatcap/metrics.hpp"
#include "chatcap/model.hpp"
#include "chatcap/random.hpp"
#include "chatcap/synthetic.hpp"
#include "chatcap/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace chatcap;

namespace {

struct CorpusArgs {
  std::string path;
  std::string dailydialog_dir;
  std::string split;
};

struct TrainArgs {
  CorpusArgs train{"", "", "train"};
  CorpusArgs valid{"", "", "validation"};
  std::string schema = "customer-service";
  std::string out = "run";
  std::string word_vectors;
  std::string resume;
  std::string metrics_log;
  std::size_t min_count = 1;
  std::string architecture = "chat-capsule";
  std::size_t d_word = 50, d_model = 32, d_h = 32, d_a = 32;
  double dropout = 0.5;
  bool no_rectifier = false, no_feedback = false, bidirectional = false;
  double lr_main = 1e-3, lr_wordvec = 1e-4;
  std::size_t batch = 32, checkpoint_every = 16, max_epochs = 10, max_steps = 0;
  std::uint64_t seed = 1;
};

struct EvalArgs {
  std::string checkpoint;
  CorpusArgs data{"", "", "test"};
  std::string report;
};

struct GenArgs {
  std::size_t n = 100;
  std::uint64_t seed = 1;
  std::string out;
  std::size_t min_utterances = 4, max_utterances = 10;
};

struct GradArgs {
  std::uint64_t seed = 1;
  std::size_t dialogs = 2;
  std::string corrupt;
};

std::vector<Dialog> read_corpus(const CorpusArgs& a, const LabelSchema& schema) {
  if (!a.dailydialog_dir.empty()) {
    if (schema.name != "dailydialog") throw SchemaError("DailyDialog input requires the dailydialog schema");
    return load_dailydialog(a.dailydialog_dir, a.split);
  }
  if (a.path.empty()) throw UsageError("no corpus given");
  return parse_interchange(fs::path(a.path), schema);
}

json train_echo(const TrainArgs& a) {
  return json{{"command", "train"},
              {"train", a.train.path},
              {"valid", a.valid.path},
              {"dailydialog", a.train.dailydialog_dir},
              {"schema", a.schema},
              {"word_vectors", a.word_vectors},
              {"min_count", a.min_count},
              {"architecture", a.architecture},
              {"d_word", a.d_word},
              {"d_model", a.d_model},
              {"d_h", a.d_h},
              {"d_a", a.d_a},
              {"dropout", a.dropout},
              {"use_rectifier", !a.no_rectifier},
              {"use_feedback", !a.no_feedback},
              {"bidirectional", a.bidirectional},
              {"lr_main", a.lr_main},
              {"lr_wordvec", a.lr_wordvec},
              {"batch", a.batch},
              {"checkpoint_every", a.checkpoint_every},
              {"max_epochs", a.max_epochs},
              {"max_steps", a.max_steps},
              {"seed", a.seed},
              {"code_version", code_version()}};
}

int run_train(const TrainArgs& a) {
  const LabelSchema schema = LabelSchema::by_name(a.schema);
  // Read every input before any training starts.
  const std::vector<Dialog> train_dialogs = read_corpus(a.train, schema);
  std::vector<Dialog> valid_dialogs;
  if (!a.valid.path.empty() || !a.valid.dailydialog_dir.empty()) valid_dialogs = read_corpus(a.valid, schema);

  std::unique_ptr<DialogModel> model;
  Vocab vocab;
  std::optional<CheckpointContents> resumed;
  if (!a.resume.empty()) {
    resumed = load_checkpoint(a.resume);
    if (resumed->model->config().schema != schema) throw SchemaError("checkpoint schema differs from --schema");
    if (!resumed->adam) throw FormatError(a.resume + ": checkpoint has no optimizer state to resume from");
    model = std::move(resumed->model);
    vocab = resumed->vocab;
  } else {
    std::vector<std::vector<std::string>> corpus;
    for (const auto& d : train_dialogs)
      for (const auto& u : d.utterances) corpus.push_back(u.tokens);
    vocab = build_vocab(corpus, a.min_count);

    ModelConfig config;
    config.architecture = architecture_from_string(a.architecture);
    config.vocab_size = vocab.size();
    config.d_word = a.d_word;
    config.d_model = a.d_model;
    config.d_h = a.d_h;
    config.d_a = a.d_a;
    config.schema = schema;
    config.dropout = a.dropout;
    config.use_rectifier = !a.no_rectifier;
    config.use_feedback = !a.no_feedback;
    config.bidirectional_utterance = a.bidirectional;
    config.seed = a.seed;
    model = make_model(config);
    if (!a.word_vectors.empty()) {
      std::mt19937_64 rng(derive_seed(a.seed, {3}));
      const PretrainedVectors pv = load_pretrained(fs::path(a.word_vectors), vocab, a.d_word, rng);
      model->set_word_vectors(pv.table);
      std::cerr << "word vectors: " << pv.covered << " of " << vocab.size() - 2 << " tokens covered ("
                << pv.coverage << ")\n";
    }
  }

  const auto train = encode_dialogs(train_dialogs, vocab, schema);
  const auto valid = encode_dialogs(valid_dialogs, vocab, schema);

  fs::create_directories(a.out);
  const fs::path log_path = a.metrics_log.empty() ? fs::path(a.out) / "metrics.log" : fs::path(a.metrics_log);
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw DataError("cannot open metrics log " + log_path.string());

  TrainConfig tc;
  tc.lr_main = a.lr_main;
  tc.lr_wordvec = a.lr_wordvec;
  tc.batch_size = a.batch;
  tc.checkpoint_every = a.checkpoint_every;
  tc.max_epochs = a.max_epochs;
  tc.max_steps = a.max_steps;
  tc.seed = a.seed;
  tc.checkpoint_dir = a.out;
  tc.metrics_log = &log;
  Trainer trainer(*model, vocab, tc, train_echo(a));
  if (resumed) trainer.resume(resumed->position, *resumed->adam);
  trainer.fit(train, valid);

  std::cout << "steps " << trainer.position().step << ", epochs " << trainer.position().epoch << "\n";
  if (!valid.empty()) {
    const MetricReport report = evaluate(*model, valid, "valid");
    std::cout << report.text();
    std::cout << "best validation utterance macro-F1 " << trainer.position().best_metric << " at step "
              << trainer.position().best_step << "\n";
  }
  return 0;
}

int run_eval(const EvalArgs& a) {
  CheckpointContents c = load_checkpoint(a.checkpoint);
  const LabelSchema& schema = c.model->config().schema;
  const auto dialogs = read_corpus(a.data, schema);
  const auto encoded = encode_dialogs(dialogs, c.vocab, schema);
  const MetricReport report = evaluate(*c.model, encoded, a.data.dailydialog_dir.empty() ? "eval" : a.data.split);
  std::cout << report.text();
  if (!a.report.empty()) {
    std::ofstream out(a.report);
    if (!out) throw DataError("cannot write report " + a.report);
    out << "checkpoint=" << a.checkpoint << "\n"
        << "code_version=" << c.code_version << "\n"
        << "seed=" << c.model->config().seed << "\n"
        << "config=" << c.model->config().to_json().dump() << "\n"
        << report.key_values();
  }
  return 0;
}

json distribution(const LabelSet& labels, const std::vector<double>& p) {
  json out = json::object();
  for (std::size_t k = 0; k < p.size(); ++k) out[labels.at(k)] = p[k];
  return out;
}

int run_predict(const std::string& checkpoint) {
  CheckpointContents c = load_checkpoint(checkpoint);
  const ModelConfig& config = c.model->config();
  const LabelSchema& schema = config.schema;
  auto* capsule = dynamic_cast<const ChatCapsuleModel*>(c.model.get());
  std::optional<StreamSession> session;
  if (capsule) session.emplace(*capsule);
  // Baseline models have no incremental state; they rerun the prefix.
  std::vector<UtteranceInput> prefix;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(std::cin, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      if (session) session->reset();
      prefix.clear();
      std::cout << json{{"reset", true}}.dump() << std::endl;
      continue;
    }
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError("stdin", line_no, e.what());
      }
      const UtteranceInput u = encode_utterance(parse_utterance(j, schema, false), c.vocab, schema);
      json out;
      if (session) {
        const std::size_t position = session->size();
        const StreamSession::Output o = session->push(u);
        out = {{"position", position},
               {"emotion", schema.emotions.at(argmax(o.emotion))},
               {"emotion_distribution", distribution(schema.emotions, o.emotion)},
               {"attention", o.utterance_attention},
               {"running_satisfaction", distribution(schema.satisfaction, o.running_satisfaction)},
               {"running_curve", distribution(schema.curve, o.running_curve)}};
      } else {
        prefix.push_back(u);
        Tape tape(false);
        const DialogForward f = c.model->forward(tape, unpadded(prefix), ForwardOptions{});
        const DialogPrediction p = DialogPrediction::from(f);
        out = {{"position", prefix.size() - 1},
               {"emotion", schema.emotions.at(argmax(p.emotion.back()))},
               {"emotion_distribution", distribution(schema.emotions, p.emotion.back())},
               {"running_satisfaction", distribution(schema.satisfaction, p.satisfaction)},
               {"running_curve", distribution(schema.curve, p.curve)}};
      }
      out["running_estimate"] = true;
      std::cout << out.dump() << std::endl;
    } catch (const Error& e) {
      std::cout << json{{"line", line_no}, {"error", e.what()}}.dump() << std::endl;
    }
  }
  return 0;
}

int run_gen(const GenArgs& a) {
  SyntheticOptions options;
  options.min_utterances = a.min_utterances;
  options.max_utterances = a.max_utterances;
  const auto dialogs = gen_synthetic(a.n, a.seed, LabelSchema::customer_service(), options);
  if (a.out.empty() || a.out == "-") {
    write_interchange(std::cout, dialogs);
  } else {
    write_interchange(fs::path(a.out), dialogs);
  }
  return 0;
}

int run_gradcheck(const GradArgs& a) {
  const ModelConfig config = toy_config(a.seed);
  auto model = make_model(config);
  const auto dialogs = toy_dialogs(config, a.dialogs, 2, a.seed);
  GradcheckOptions options;
  if (!a.corrupt.empty()) options.corrupt = a.corrupt;
  const GradcheckReport report = gradcheck(*model, dialogs, options);
  for (const auto& t : report.tensors) {
    std::cout << (t.passed ? "PASS " : "FAIL ") << t.name << " elements=" << t.elements
              << " max_rel_err=" << t.max_relative_error << "\n";
  }
  std::cout << (report.passed ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return report.passed ? 0 : 3;
}

void add_corpus_options(CLI::App* cmd, CorpusArgs& c, const std::string& prefix, const std::string& what) {
  cmd->add_option("--" + prefix, c.path, what + " corpus (one JSON dialog per line)");
  cmd->add_option("--" + prefix + "-dailydialog", c.dailydialog_dir, what + " corpus as a DailyDialog directory");
  cmd->add_option("--" + prefix + "-split", c.split, "DailyDialog split name for --" + prefix + "-dailydialog")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical capsule model for dialog emotion analysis"};
  app.set_config("--config", "", "key = value configuration file; command-line flags take precedence");
  app.require_subcommand(1);
  app.set_version_flag("--version", code_version());

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model");
  add_corpus_options(train, ta.train, "train", "training");
  add_corpus_options(train, ta.valid, "valid", "validation");
  train->add_option("--schema", ta.schema, "Label schema: customer-service or dailydialog")->capture_default_str();
  train->add_option("--out", ta.out, "Directory for checkpoints and the metrics log")->capture_default_str();
  train->add_option("--word-vectors", ta.word_vectors, "Pretrained word vectors (text format)");
  train->add_option("--resume", ta.resume, "Continue from a checkpoint with optimizer state");
  train->add_option("--metrics-log", ta.metrics_log, "Metrics log path (default <out>/metrics.log)");
  train->add_option("--min-count", ta.min_count, "Minimum token frequency for the vocabulary")->capture_default_str();
  train->add_option("--architecture", ta.architecture, "chat-capsule or lstm-baseline")->capture_default_str();
  train->add_option("--d-word", ta.d_word)->capture_default_str();
  train->add_option("--d-model", ta.d_model)->capture_default_str();
  train->add_option("--d-h", ta.d_h)->capture_default_str();
  train->add_option("--d-a", ta.d_a)->capture_default_str();
  train->add_option("--dropout", ta.dropout)->capture_default_str();
  train->add_flag("--no-rectifier", ta.no_rectifier, "Feed unscaled speaker/intent embeddings");
  train->add_flag("--no-feedback", ta.no_feedback, "Emotion head sees the utterance representation only");
  train->add_flag("--bidirectional", ta.bidirectional, "Bidirectional utterance encoder");
  train->add_option("--lr-main", ta.lr_main)->capture_default_str();
  train->add_option("--lr-wordvec", ta.lr_wordvec)->capture_default_str();
  train->add_option("--batch", ta.batch)->capture_default_str();
  train->add_option("--checkpoint-every", ta.checkpoint_every)->capture_default_str();
  train->add_option("--max-epochs", ta.max_epochs)->capture_default_str();
  train->add_option("--max-steps", ta.max_steps, "0 = no step limit")->capture_default_str();
  train->add_option("--seed", ta.seed)->capture_default_str();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a corpus");
  eval->add_option("--checkpoint", ea.checkpoint)->required();
  add_corpus_options(eval, ea.data, "data", "evaluation");
  eval->add_option("--report", ea.report, "Write a key=value report here");

  std::string predict_checkpoint;
  auto* predict = app.add_subcommand("predict", "Stream utterances from stdin, one JSON object per line");
  predict->add_option("--checkpoint", predict_checkpoint)->required();

  GenArgs ga;
  auto* gen = app.add_subcommand("gen-data", "Generate planted-label synthetic dialogs");
  gen->add_option("--n", ga.n, "Number of dialogs")->capture_default_str();
  gen->add_option("--seed", ga.seed)->capture_default_str();
  gen->add_option("--out", ga.out, "Output path (default stdout)");
  gen->add_option("--min-utterances", ga.min_utterances)->capture_default_str();
  gen->add_option("--max-utterances", ga.max_utterances)->capture_default_str();

  GradArgs gra;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  grad->add_option("--seed", gra.seed)->capture_default_str();
  grad->add_option("--dialogs", gra.dialogs, "Number of toy dialogs")->capture_default_str();
  grad->add_option("--corrupt-grad", gra.corrupt)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return run_train(ta);
    if (*eval) return run_eval(ea);
    if (*predict) return run_predict(predict_checkpoint);
    if (*gen) return run_gen(ga);
    if (*grad) return run_gradcheck(gra);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
