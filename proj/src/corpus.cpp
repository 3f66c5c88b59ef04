#include "seq2sick/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "seq2sick/errors.hpp"
#include "seq2sick/random.hpp"

namespace seq2sick {

void Corpus::validate() const {
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto check = [&](const TokenSequence& seq, const Vocabulary& vocab, const char* side) {
      if (seq.empty()) throw InputError("pair " + std::to_string(i) + ": empty " + side + " sequence");
      for (int tok : seq) {
        if (tok < 0 || static_cast<std::size_t>(tok) >= vocab.size()) {
          throw InputError("pair " + std::to_string(i) + ": " + side + " token " + std::to_string(tok) +
                           " outside vocabulary");
        }
      }
    };
    check(pairs[i].source, source_vocab, "source");
    check(pairs[i].target, target_vocab, "target");
  }
}

TaskKind parse_task_kind(const std::string& name) {
  if (name == "copy") return TaskKind::kCopy;
  if (name == "reverse") return TaskKind::kReverse;
  if (name == "translation") return TaskKind::kTranslation;
  throw ConfigError("unknown task kind '" + name + "' (expected copy, reverse or translation)");
}

const char* task_kind_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kReverse: return "reverse";
    case TaskKind::kTranslation: return "translation";
  }
  return "?";
}

void TaskSpec::validate() const {
  if (vocab_size <= 8) throw std::invalid_argument("vocab_size must exceed 8");
  if (min_len < 2 || max_len > 20 || min_len > max_len) {
    throw std::invalid_argument("length range must satisfy 2 <= min_len <= max_len <= 20");
  }
}

namespace {

TokenSequence random_sequence(Rng& rng, std::size_t vocab_size, int min_len, int max_len) {
  TokenSequence seq(static_cast<std::size_t>(rng.between(min_len, max_len)));
  for (int& tok : seq) tok = rng.between(kNumReserved, static_cast<int>(vocab_size) - 1);
  return seq;
}

template <typename Transform>
Corpus generate(std::size_t n_pairs, std::size_t vocab_size, int min_len, int max_len, std::uint64_t seed,
                Vocabulary src, Vocabulary tgt, Transform&& transform) {
  TaskSpec{TaskKind::kCopy, n_pairs, vocab_size, min_len, max_len, seed}.validate();
  Rng rng(seed);
  Corpus corpus{{}, std::move(src), std::move(tgt)};
  corpus.pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    TokenSequence source = random_sequence(rng, vocab_size, min_len, max_len);
    TokenSequence target = transform(source);
    corpus.pairs.push_back({std::move(source), std::move(target)});
  }
  return corpus;
}

}  // namespace

Corpus gen_copy_task(std::size_t n_pairs, std::size_t vocab_size, int min_len, int max_len, std::uint64_t seed) {
  const auto vocab = Vocabulary::synthetic(vocab_size, "w");
  return generate(n_pairs, vocab_size, min_len, max_len, seed, vocab, vocab,
                  [](const TokenSequence& s) { return s; });
}

Corpus gen_reverse_task(std::size_t n_pairs, std::size_t vocab_size, int min_len, int max_len,
                        std::uint64_t seed) {
  const auto vocab = Vocabulary::synthetic(vocab_size, "w");
  return generate(n_pairs, vocab_size, min_len, max_len, seed, vocab, vocab,
                  [](const TokenSequence& s) { return TokenSequence(s.rbegin(), s.rend()); });
}

TokenSequence apply_toy_translation(const TokenSequence& source, const std::vector<int>& bijection) {
  TokenSequence target;
  target.reserve(source.size());
  for (int tok : source) target.push_back(bijection.at(static_cast<std::size_t>(tok)));
  if (target.size() >= 2) std::swap(target[0], target[1]);
  return target;
}

ToyTranslation gen_toy_translation(std::size_t n_pairs, std::size_t vocab_size, int min_len, int max_len,
                                   std::uint64_t seed) {
  std::vector<int> bijection(vocab_size);
  std::iota(bijection.begin(), bijection.end(), 0);
  // The permutation draws from its own stream so corpus size does not change it.
  Rng perm_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> content(bijection.begin() + kNumReserved, bijection.end());
  perm_rng.shuffle(content);
  std::copy(content.begin(), content.end(), bijection.begin() + kNumReserved);

  ToyTranslation out;
  out.corpus = generate(n_pairs, vocab_size, min_len, max_len, seed, Vocabulary::synthetic(vocab_size, "x"),
                        Vocabulary::synthetic(vocab_size, "y"),
                        [&](const TokenSequence& s) { return apply_toy_translation(s, bijection); });
  out.bijection = std::move(bijection);
  return out;
}

Corpus generate_task(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::kCopy:
      return gen_copy_task(spec.n_pairs, spec.vocab_size, spec.min_len, spec.max_len, spec.seed);
    case TaskKind::kReverse:
      return gen_reverse_task(spec.n_pairs, spec.vocab_size, spec.min_len, spec.max_len, spec.seed);
    case TaskKind::kTranslation:
      return gen_toy_translation(spec.n_pairs, spec.vocab_size, spec.min_len, spec.max_len, spec.seed).corpus;
  }
  throw std::logic_error("unreachable task kind");
}

namespace {

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, std::size_t& unknown) {
  std::istringstream in(text);
  TokenSequence seq;
  std::string tok;
  while (in >> tok) {
    const int idx = vocab.find(tok);
    if (idx < 0) ++unknown;
    seq.push_back(idx < 0 ? kUnk : idx);
  }
  return seq;
}

}  // namespace

Corpus parse_corpus(const std::string& text, const Vocabulary& source_vocab, const Vocabulary& target_vocab) {
  Corpus corpus{{}, source_vocab, target_vocab};
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw InputError("line " + std::to_string(line_no) + ": expected exactly one TAB");
    }
    SequencePair pair{tokenize(line.substr(0, tab), source_vocab, corpus.unknown_tokens),
                      tokenize(line.substr(tab + 1), target_vocab, corpus.unknown_tokens)};
    if (pair.source.empty() || pair.target.empty()) {
      throw InputError("line " + std::to_string(line_no) + ": empty source or target");
    }
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, const Vocabulary& source_vocab, const Vocabulary& target_vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_corpus(buffer.str(), source_vocab, target_vocab);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

std::string format_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& pair : corpus.pairs) {
    out += corpus.source_vocab.render(pair.source);
    out += '\t';
    out += corpus.target_vocab.render(pair.target);
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write corpus " + path);
  out << format_corpus(corpus);
  if (!out) throw IoError("write failed for " + path);
}

std::vector<TokenSequence> load_sources(const std::string& path, const Vocabulary& source_vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open input file " + path);
  std::vector<TokenSequence> sources;
  std::string line;
  std::size_t unknown = 0, line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    auto seq = tokenize(line.substr(0, tab), source_vocab, unknown);
    if (seq.empty()) {
      if (line.empty()) continue;
      throw InputError(path + ": line " + std::to_string(line_no) + ": empty source");
    }
    sources.push_back(std::move(seq));
  }
  return sources;
}

}  // namespace seq2sick
