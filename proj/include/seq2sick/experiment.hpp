#pragma once

// Batch drivers shared by the command-line tool and the acceptance suite:
// keyword sampling, batched attacks, and the random-substitution baseline.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "seq2sick/attack.hpp"
#include "seq2sick/evaluation.hpp"

namespace seq2sick {

/// How each sample gets its keywords in keyword mode.
struct KeywordPlan {
  /// Used for every sample when nonempty.
  std::vector<int> fixed;
  /// Otherwise this many keywords are drawn per sample from the target
  /// vocabulary, skipping reserved tokens, `banned`, and tokens already in the
  /// clean output.
  std::size_t count = 1;
  std::set<int> banned;
  std::uint64_t seed = 1;
};

/// Per-sample seed derived from a run seed; stable across worker counts.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t sample);

/// Draws `count` distinct keywords. Returns fewer when the pool is too small.
std::vector<int> sample_keywords(const TokenSequence& clean_output, std::size_t target_vocab_size, std::size_t count,
                                 const std::set<int>& banned, std::uint64_t seed);

/// Keywords for sample `sample` under `plan`.
std::vector<int> keywords_for_sample(const KeywordPlan& plan, const TokenSequence& clean_output,
                                     std::size_t target_vocab_size, std::size_t sample);

const char* mode_name(AttackMode mode);
AttackMode parse_mode(const std::string& name);

/// Runs one attack per input; results keep input order regardless of `workers`.
std::vector<AttackResult> attack_batch(const ModelParams& params, const std::vector<TokenSequence>& inputs,
                                       const AttackConfig& base, const KeywordPlan& plan,
                                       const EmbeddingIndex& index, int workers = 1);

/// Replaces exactly `budget` mutable positions (capped at the number of
/// mutable positions) with uniformly drawn different non-reserved tokens,
/// `restarts` times. Returns the first successful draw, else the last one.
/// `iterations` in the result counts the draws made.
AttackResult random_substitution_attack(const ModelParams& params, const TokenSequence& input, const AttackConfig& config,
                                        int budget, int restarts, std::uint64_t seed);

std::vector<AttackResult> baseline_batch(const ModelParams& params, const std::vector<TokenSequence>& inputs,
                                         const AttackConfig& base, const KeywordPlan& plan,
                                         const std::vector<int>& budgets, int restarts, std::uint64_t seed,
                                         int workers = 1);

ReportRow make_report_row(const std::string& id, AttackMode mode, const AttackResult& result);
AttackReport make_report(AttackMode mode, const std::vector<AttackResult>& results, bool successes_only = false);

}  // namespace seq2sick
