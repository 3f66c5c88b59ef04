#include "seq2sick/vocab.hpp"

#include <fstream>
#include <stdexcept>

#include "seq2sick/errors.hpp"

namespace seq2sick {

namespace {
const std::vector<std::string> kReservedTokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
}  // namespace

Vocabulary::Vocabulary() : Vocabulary(kReservedTokens) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReservedTokens.size()) {
    throw std::invalid_argument("vocabulary must start with the 4 reserved tokens");
  }
  for (std::size_t i = 0; i < kReservedTokens.size(); ++i) {
    if (tokens_[i] != kReservedTokens[i]) {
      throw std::invalid_argument("vocabulary line " + std::to_string(i) + " must be " +
                                  kReservedTokens[i] + ", got '" + tokens_[i] + "'");
    }
  }
  lookup_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!lookup_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

Vocabulary Vocabulary::synthetic(std::size_t size, std::string_view prefix) {
  std::vector<std::string> tokens = kReservedTokens;
  for (std::size_t i = kNumReserved; i < size; ++i) {
    tokens.push_back(std::string(prefix) + std::to_string(i));
  }
  return Vocabulary(std::move(tokens));
}

int Vocabulary::find(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  return it == lookup_.end() ? -1 : it->second;
}

int Vocabulary::index_or_unk(std::string_view token) const {
  int idx = find(token);
  return idx < 0 ? kUnk : idx;
}

int Vocabulary::add(std::string token) {
  int idx = find(token);
  if (idx >= 0) return idx;
  idx = static_cast<int>(tokens_.size());
  lookup_.emplace(token, idx);
  tokens_.push_back(std::move(token));
  return idx;
}

std::string Vocabulary::render(const TokenSequence& seq) const {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += ' ';
    out += token(seq[i]);
  }
  return out;
}

Vocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary file " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  try {
    return Vocabulary(std::move(tokens));
  } catch (const std::invalid_argument& e) {
    throw InputError(path + ": " + e.what());
  }
}

void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file " + path);
  for (const auto& t : vocab.tokens()) out << t << '\n';
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace seq2sick
