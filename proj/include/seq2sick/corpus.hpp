#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seq2sick/vocab.hpp"

namespace seq2sick {

struct SequencePair {
  TokenSequence source;
  TokenSequence target;
  friend bool operator==(const SequencePair&, const SequencePair&) = default;
};

struct Corpus {
  std::vector<SequencePair> pairs;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  /// Tokens mapped to <unk> while loading.
  std::size_t unknown_tokens = 0;

  /// Throws InputError on empty sequences or out-of-range indices.
  void validate() const;
};

enum class TaskKind { kCopy, kReverse, kTranslation };

TaskKind parse_task_kind(const std::string& name);
const char* task_kind_name(TaskKind kind);

struct TaskSpec {
  TaskKind kind = TaskKind::kCopy;
  std::size_t n_pairs = 1000;
  std::size_t vocab_size = 20;  // including the 4 reserved tokens
  int min_len = 3;
  int max_len = 6;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument unless vocab_size > 8 and
  /// 2 <= min_len <= max_len <= 20.
  void validate() const;
};

/// Target equals source.
Corpus gen_copy_task(std::size_t n_pairs, std::size_t vocab_size, int min_len, int max_len, std::uint64_t seed);
/// Target is the source reversed.
Corpus gen_reverse_task(std::size_t n_pairs, std::size_t vocab_size, int min_len, int max_len,
                        std::uint64_t seed);

struct ToyTranslation {
  Corpus corpus;
  /// bijection[i] is the target index for source index i; identity on reserved tokens.
  std::vector<int> bijection;
};

/// Maps each token through `bijection`, then swaps the first two tokens.
TokenSequence apply_toy_translation(const TokenSequence& source, const std::vector<int>& bijection);

/// Token-wise seeded bijection with the first two output tokens swapped.
ToyTranslation gen_toy_translation(std::size_t n_pairs, std::size_t vocab_size, int min_len, int max_len,
                                   std::uint64_t seed);

Corpus generate_task(const TaskSpec& spec);

/// Tab-separated: source tokens, TAB, target tokens; tokens space-separated.
/// Unknown tokens map to <unk> and are counted in `unknown_tokens`.
Corpus load_corpus(const std::string& path, const Vocabulary& source_vocab, const Vocabulary& target_vocab);
Corpus parse_corpus(const std::string& text, const Vocabulary& source_vocab, const Vocabulary& target_vocab);
std::string format_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::string& path);

/// Source sequences, one per line. A TAB and anything after it are ignored.
std::vector<TokenSequence> load_sources(const std::string& path, const Vocabulary& source_vocab);

}  // namespace seq2sick
