#include "seq2sick/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "seq2sick/errors.hpp"
#include "seq2sick/random.hpp"

namespace seq2sick {

std::uint64_t sample_seed(std::uint64_t seed, std::size_t sample) {
  // splitmix64 finaliser over (seed, sample).
  std::uint64_t z = seed * 0x9e3779b97f4a7c15ULL + sample + 1;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<int> sample_keywords(const TokenSequence& clean_output, std::size_t target_vocab_size, std::size_t count,
                                 const std::set<int>& banned, std::uint64_t seed) {
  std::vector<int> pool;
  for (int tok = kNumReserved; tok < static_cast<int>(target_vocab_size); ++tok) {
    if (banned.count(tok)) continue;
    if (std::find(clean_output.begin(), clean_output.end(), tok) != clean_output.end()) continue;
    pool.push_back(tok);
  }
  Rng rng(seed);
  rng.shuffle(pool);
  pool.resize(std::min(pool.size(), count));
  return pool;
}

std::vector<int> keywords_for_sample(const KeywordPlan& plan, const TokenSequence& clean_output,
                                     std::size_t target_vocab_size, std::size_t sample) {
  if (!plan.fixed.empty()) return plan.fixed;
  return sample_keywords(clean_output, target_vocab_size, plan.count, plan.banned, sample_seed(plan.seed, sample));
}

const char* mode_name(AttackMode mode) {
  return mode == AttackMode::kNonOverlapping ? "nonoverlap" : "keywords";
}

AttackMode parse_mode(const std::string& name) {
  if (name == "nonoverlap" || name == "non-overlapping" || name == "nonoverlapping") {
    return AttackMode::kNonOverlapping;
  }
  if (name == "keywords" || name == "keyword") return AttackMode::kKeywords;
  throw ConfigError("unknown attack mode '" + name + "' (expected nonoverlap or keywords)");
}

namespace {

/// Calls fn(i) for i in [0, n) on up to `workers` threads.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  if (threads == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(threads, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

AttackConfig config_for_sample(const ModelParams& params, const TokenSequence& input, const AttackConfig& base,
                               const KeywordPlan& plan, std::size_t sample) {
  AttackConfig config = base;
  if (config.mode == AttackMode::kKeywords) {
    const Matrix X = embed(input, params.src_embedding);
    const TokenSequence clean = decode_for_attack(params, X, input.size(), config.beam_width);
    config.keywords = keywords_for_sample(plan, clean, static_cast<std::size_t>(params.tgt_vocab_size()), sample);
    if (config.keywords.empty()) throw ConfigError("no keyword candidates left for sample " + std::to_string(sample));
  }
  return config;
}

}  // namespace

std::vector<AttackResult> attack_batch(const ModelParams& params, const std::vector<TokenSequence>& inputs,
                                       const AttackConfig& base, const KeywordPlan& plan,
                                       const EmbeddingIndex& index, int workers) {
  std::vector<AttackResult> results(inputs.size());
  parallel_for(inputs.size(), workers, [&](std::size_t i) {
    results[i] = run_attack(params, inputs[i], config_for_sample(params, inputs[i], base, plan, i), index);
  });
  return results;
}

AttackResult random_substitution_attack(const ModelParams& params, const TokenSequence& input, const AttackConfig& config,
                                        int budget, int restarts, std::uint64_t seed) {
  if (input.empty()) throw InputError("baseline: empty input sequence");
  config.validate(static_cast<std::size_t>(params.tgt_vocab_size()));
  const int vocab = static_cast<int>(params.src_vocab_size());
  if (vocab - kNumReserved < 2) throw ConfigError("baseline: source vocabulary too small");

  AttackResult result;
  result.original = input;
  result.keywords = config.keywords;
  result.original_output = decode_for_attack(params, embed(input, params.src_embedding), input.size(), config.beam_width);
  auto succeeded = [&](const TokenSequence& output) {
    return config.mode == AttackMode::kNonOverlapping ? is_non_overlap_success(output, result.original_output)
                                                      : is_keyword_success(output, config.keywords);
  };

  std::vector<int> positions;
  const auto mutable_rows = mutable_positions(input, config.immutable_positions);
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (mutable_rows[i]) positions.push_back(static_cast<int>(i));
  }
  const auto changes = static_cast<std::size_t>(std::clamp<int>(budget, 0, static_cast<int>(positions.size())));

  Rng rng(seed);
  const int draws = changes == 0 ? 1 : std::max(1, restarts);
  for (int r = 0; r < draws; ++r) {
    TokenSequence candidate = input;
    rng.shuffle(positions);
    for (std::size_t p = 0; p < changes; ++p) {
      int& tok = candidate[static_cast<std::size_t>(positions[p])];
      // Uniform over the other non-reserved tokens.
      int replacement = rng.between(kNumReserved, vocab - 2);
      if (replacement >= tok) ++replacement;
      tok = replacement;
    }
    result.adversarial = candidate;
    result.adversarial_output =
        decode_for_attack(params, embed(candidate, params.src_embedding), input.size(), config.beam_width);
    result.changed_words = static_cast<int>(changes);
    result.iterations = r + 1;
    result.success = succeeded(result.adversarial_output);
    if (result.success) break;
  }
  return result;
}

std::vector<AttackResult> baseline_batch(const ModelParams& params, const std::vector<TokenSequence>& inputs,
                                         const AttackConfig& base, const KeywordPlan& plan,
                                         const std::vector<int>& budgets, int restarts, std::uint64_t seed,
                                         int workers) {
  if (budgets.size() != inputs.size()) throw ConfigError("baseline: one budget per input required");
  std::vector<AttackResult> results(inputs.size());
  parallel_for(inputs.size(), workers, [&](std::size_t i) {
    results[i] = random_substitution_attack(params, inputs[i], config_for_sample(params, inputs[i], base, plan, i),
                                            budgets[i], restarts, sample_seed(seed ^ 0x5bd1e995ULL, i));
  });
  return results;
}

ReportRow make_report_row(const std::string& id, AttackMode mode, const AttackResult& result) {
  return {id,
          mode_name(mode),
          mode == AttackMode::kKeywords ? static_cast<int>(result.keywords.size()) : 0,
          result.success,
          bleu(result.adversarial, result.original),
          changed_words(result.original, result.adversarial),
          result.iterations};
}

AttackReport make_report(AttackMode mode, const std::vector<AttackResult>& results, bool successes_only) {
  std::vector<ReportRow> rows;
  rows.reserve(results.size());
  for (std::size_t i = 0; i < results.size(); ++i) rows.push_back(make_report_row(std::to_string(i), mode, results[i]));
  return aggregate(std::move(rows), successes_only);
}

}  // namespace seq2sick
