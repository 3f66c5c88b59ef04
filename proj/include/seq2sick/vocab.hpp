#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace seq2sick {

/// A sequence of vocabulary indices.
using TokenSequence = std::vector<int>;

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumReserved = 4;

inline bool is_reserved(int token) { return token >= 0 && token < kNumReserved; }

/// Ordered list of distinct token strings. Indices 0-3 always hold
/// <pad>, <bos>, <eos>, <unk>.
class Vocabulary {
 public:
  /// Vocabulary holding only the reserved tokens.
  Vocabulary();

  /// Builds from a full token list. Throws std::invalid_argument when the
  /// reserved prefix is missing or a token repeats.
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Reserved tokens followed by `prefix + index` for index in [4, size).
  static Vocabulary synthetic(std::size_t size, std::string_view prefix);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Index of `token`, or -1 when absent.
  int find(std::string_view token) const;
  /// Index of `token`, or kUnk when absent.
  int index_or_unk(std::string_view token) const;

  /// Appends a token if it is not yet present; returns its index.
  int add(std::string token);

  std::string render(const TokenSequence& seq) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> lookup_;
};

/// One token per line; line number is the index.
Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& vocab, const std::string& path);

}  // namespace seq2sick
