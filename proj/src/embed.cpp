#include "chatcap/embed.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "chatcap/error.hpp"

namespace chatcap {

Vocab::Vocab() {
  append(std::string(kPadToken));
  append(std::string(kUnkToken));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[kPadIndex] != kPadToken || tokens[kUnkIndex] != kUnkToken) {
    throw FormatError("vocabulary must start with " + std::string(kPadToken) + " and " +
                      std::string(kUnkToken));
  }
  Vocab v;
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    if (v.find(tokens[i])) throw FormatError("duplicate vocabulary token '" + tokens[i] + "'");
    v.append(std::move(tokens[i]));
  }
  return v;
}

void Vocab::append(std::string token) {
  index_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

std::size_t Vocab::index(std::string_view token) const {
  return find(token).value_or(kUnkIndex);
}

std::optional<std::size_t> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocab::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

Vocab build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count) {
  if (min_count < 1) throw ContractError("build_vocab: min_count must be >= 1");
  struct Stat {
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  std::vector<std::string> order;
  for (const auto& sequence : corpus) {
    for (const auto& token : sequence) {
      if (token == kPadToken || token == kUnkToken) continue;
      auto [it, inserted] = stats.try_emplace(token);
      if (inserted) {
        it->second.first_seen = order.size();
        order.push_back(token);
      }
      ++it->second.count;
    }
  }
  std::vector<std::string> kept;
  for (const auto& token : order) {
    if (stats[token].count >= min_count) kept.push_back(token);
  }
  std::stable_sort(kept.begin(), kept.end(), [&](const std::string& a, const std::string& b) {
    return stats[a].count > stats[b].count;
  });
  std::vector<std::string> tokens{std::string(kPadToken), std::string(kUnkToken)};
  tokens.insert(tokens.end(), kept.begin(), kept.end());
  return Vocab::from_tokens(std::move(tokens));
}

Tensor EmbeddingTable::lookup(Tape& tape, std::span<const std::size_t> indices) const {
  return gather_rows(tape, table, indices, pad_row.value_or(static_cast<std::size_t>(-1)));
}

Tensor EmbeddingTable::lookup_row(Tape& tape, std::size_t index) const {
  const std::size_t idx[1] = {index};
  return reshape(tape, lookup(tape, idx), {dim()});
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

bool parse_size(std::string_view s, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  // strtod keeps the exact decimal-to-binary rounding of the C library.
  std::string copy(s);
  char* end = nullptr;
  out = std::strtod(copy.c_str(), &end);
  return end == copy.c_str() + copy.size();
}

}  // namespace

PretrainedVectors load_pretrained(const std::filesystem::path& path, const Vocab& vocab,
                                  std::size_t d_word, std::mt19937_64& rng) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vectors " + path.string());
  return load_pretrained(in, path.string(), vocab, d_word, rng);
}

PretrainedVectors load_pretrained(std::istream& in, const std::string& source, const Vocab& vocab,
                                  std::size_t d_word, std::mt19937_64& rng) {
  if (d_word == 0) throw ContractError("load_pretrained: d_word must be positive");
  Tensor table = Tensor::zeros({vocab.size(), d_word});
  auto data = table.mutable_data();
  std::uniform_real_distribution<double> init(-0.1, 0.1);
  for (std::size_t r = 0; r < vocab.size(); ++r) {
    for (std::size_t c = 0; c < d_word; ++c) data[r * d_word + c] = init(rng);
  }
  std::vector<bool> filled(vocab.size(), false);

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    std::size_t count = 0, dim = 0;
    if (line_no == 1 && fields.size() == 2 && parse_size(fields[0], count) &&
        parse_size(fields[1], dim)) {
      if (dim != d_word) {
        throw FormatError(source + ": declares dimension " + std::to_string(dim) +
                          " but the model expects " + std::to_string(d_word));
      }
      continue;
    }
    if (fields.size() != d_word + 1) {
      throw ParseError(source, line_no,
                       "expected a token and " + std::to_string(d_word) + " values, found " +
                           std::to_string(fields.size()) + " fields");
    }
    std::vector<double> values(d_word);
    for (std::size_t c = 0; c < d_word; ++c) {
      if (!parse_double(fields[c + 1], values[c])) {
        throw ParseError(source, line_no, "bad number '" + std::string(fields[c + 1]) + "'");
      }
    }
    auto idx = vocab.find(fields[0]);
    if (!idx || *idx == kPadIndex || *idx == kUnkIndex || filled[*idx]) continue;
    std::copy(values.begin(), values.end(), data.begin() + static_cast<std::ptrdiff_t>(*idx * d_word));
    filled[*idx] = true;
  }
  for (std::size_t c = 0; c < d_word; ++c) data[kPadIndex * d_word + c] = 0.0;

  PretrainedVectors out;
  out.table = table;
  out.covered = static_cast<std::size_t>(std::count(filled.begin(), filled.end(), true));
  const std::size_t real = vocab.size() - 2;
  out.coverage = real == 0 ? 0.0 : static_cast<double>(out.covered) / static_cast<double>(real);
  return out;
}

}  // namespace chatcap
