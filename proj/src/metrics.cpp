#include "chatcap/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "chatcap/error.hpp"

namespace chatcap {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ContractError("confusion matrix needs at least one class");
}

void ConfusionMatrix::accumulate(std::size_t gold, std::size_t predicted) {
  if (gold >= k_ || predicted >= k_) {
    throw ContractError("confusion index (" + std::to_string(gold) + ", " + std::to_string(predicted) +
                        ") outside " + std::to_string(k_) + " classes");
  }
  ++counts_[gold * k_ + predicted];
  ++total_;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ContractError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MacroScores macro_prf(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractError("macro scores of an empty confusion matrix");
  const std::size_t k = cm.classes();
  MacroScores s;
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::uint64_t predicted = 0, gold = 0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += cm.at(o, c);
      gold += cm.at(c, o);
    }
    const std::uint64_t tp = cm.at(c, c);
    trace += tp;
    const double p = ratio(tp, predicted);
    const double r = ratio(tp, gold);
    const double f = p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    s.class_precision.push_back(p);
    s.class_recall.push_back(r);
    s.class_f1.push_back(f);
    s.precision += p;
    s.recall += r;
    s.f1 += f;
  }
  s.precision /= static_cast<double>(k);
  s.recall /= static_cast<double>(k);
  s.f1 /= static_cast<double>(k);
  s.accuracy = ratio(trace, cm.total());
  return s;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ContractError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

EvaluationCounts::EvaluationCounts(const LabelSchema& schema)
    : utterance(schema.emotions.size()), satisfaction(schema.satisfaction.size()), curve(schema.curve.size()) {}

MetricReport MetricReport::from(std::string split, double loss, const EvaluationCounts& counts, std::size_t dialogs) {
  MetricReport r;
  r.split = std::move(split);
  r.loss = loss;
  r.dialogs = dialogs;
  r.utterances = counts.utterance.total();
  r.utterance = macro_prf(counts.utterance);
  if (counts.satisfaction.total() > 0) r.satisfaction = macro_prf(counts.satisfaction);
  if (counts.curve.total() > 0) r.curve = macro_prf(counts.curve);
  return r;
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string MetricReport::text() const {
  std::ostringstream out;
  out << "split " << split << ": " << dialogs << " dialogs, " << utterances << " utterances, loss " << fixed(loss)
      << "\n";
  auto line = [&](const char* name, const MacroScores& s) {
    out << "  " << name << "  P " << fixed(s.precision) << "  R " << fixed(s.recall) << "  F1 " << fixed(s.f1)
        << "  Acc " << fixed(s.accuracy) << "\n";
  };
  line("utterance   ", utterance);
  if (satisfaction) line("satisfaction", *satisfaction);
  if (curve) line("curve       ", *curve);
  return out.str();
}

std::string MetricReport::key_values() const {
  std::ostringstream out;
  out << "split=" << split << "\n"
      << "dialogs=" << dialogs << "\n"
      << "utterances=" << utterances << "\n"
      << "loss=" << fixed(loss) << "\n";
  auto block = [&](const char* prefix, const MacroScores& s) {
    out << prefix << ".precision=" << fixed(s.precision) << "\n"
        << prefix << ".recall=" << fixed(s.recall) << "\n"
        << prefix << ".f1=" << fixed(s.f1) << "\n"
        << prefix << ".accuracy=" << fixed(s.accuracy) << "\n";
  };
  block("utterance", utterance);
  if (satisfaction) block("satisfaction", *satisfaction);
  if (curve) block("curve", *curve);
  return out.str();
}

}  // namespace chatcap
