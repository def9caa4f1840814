#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "chatcap/tensor.hpp"

namespace chatcap {

inline constexpr std::size_t kPadIndex = 0;
inline constexpr std::size_t kUnkIndex = 1;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

// Token <-> index map. Indices 0 and 1 are always PAD and UNK.
class Vocab {
 public:
  Vocab();
  // Tokens in index order; the first two must be the PAD and UNK tokens.
  static Vocab from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  // UNK for out-of-vocabulary tokens.
  std::size_t index(std::string_view token) const;
  std::optional<std::size_t> find(std::string_view token) const;
  const std::string& token(std::size_t index) const { return tokens_.at(index); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // One token per line, index implied by line number.
  void save(std::ostream& out) const;
  static Vocab load(std::istream& in);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void append(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Tokens with frequency >= min_count, most frequent first, ties broken by
// first occurrence. An empty corpus yields a vocabulary with PAD and UNK only.
Vocab build_vocab(std::span<const std::vector<std::string>> corpus, std::size_t min_count);

struct EmbeddingTable {
  Tensor table;  // [|V| x d]
  bool trainable = true;
  std::optional<std::size_t> pad_row;

  std::size_t rows() const { return table.dim(0); }
  std::size_t dim() const { return table.dim(1); }

  // [n x d] gather; the PAD row never receives gradient.
  Tensor lookup(Tape& tape, std::span<const std::size_t> indices) const;
  Tensor lookup_row(Tape& tape, std::size_t index) const;
};

struct PretrainedVectors {
  Tensor table;             // [|V| x d_word], PAD row zero
  std::size_t covered = 0;  // non-reserved vocabulary entries found in the file
  double coverage = 0.0;    // covered / (|V| - 2)
};

// Reads whitespace-separated "token v1 ... vd" lines, with an optional
// "count dim" header. Rows for uncovered tokens are drawn from U(-0.1, 0.1).
PretrainedVectors load_pretrained(const std::filesystem::path& path, const Vocab& vocab,
                                  std::size_t d_word, std::mt19937_64& rng);
PretrainedVectors load_pretrained(std::istream& in, const std::string& source, const Vocab& vocab,
                                  std::size_t d_word, std::mt19937_64& rng);

// Learned linear map from word-vector space to the shared model dimension.
struct InputProjection {
  Tensor weight;  // [d_model x d_word]

  Tensor apply(Tape& tape, const Tensor& word_vector) const { return matvec(tape, weight, word_vector); }
};

}  // namespace chatcap
