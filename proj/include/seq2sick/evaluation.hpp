#pragma once

#include <string>
#include <vector>

#include "seq2sick/vocab.hpp"

namespace seq2sick {

/// Sentence-level BLEU-4 with brevity penalty. Unigram precision is
/// unsmoothed; orders n >= 2 use (matches + 1) / (candidate n-grams + 1).
/// Orders for which the candidate has no n-grams are left out of the
/// geometric mean. Empty candidate or reference scores 0.
double bleu(const TokenSequence& candidate, const TokenSequence& reference);

/// Positions where the two equal-length sequences differ. Throws
/// std::logic_error on a length mismatch.
int changed_words(const TokenSequence& original, const TokenSequence& adversarial);

struct ReportRow {
  std::string id;
  std::string mode;
  int k = 0;  // number of keywords; 0 for non-overlapping
  bool success = false;
  double bleu = 0.0;
  int changed = 0;
  int iters = 0;
};

struct ReportAggregate {
  std::size_t samples = 0;
  std::size_t successes = 0;
  double success_percent = 0.0;
  double mean_bleu = 0.0;
  double mean_changed = 0.0;
  double mean_iters = 0.0;
};

struct AttackReport {
  std::vector<ReportRow> rows;
  ReportAggregate aggregate;
};

/// Success percentage over all rows. Means run over all rows, or only the
/// successful ones when `successes_only` is set (zero when there are none).
/// Throws std::invalid_argument on an empty row list.
AttackReport aggregate(std::vector<ReportRow> rows, bool successes_only = false);

/// CSV with header `id,mode,k,success,bleu,changed,iters` and a final `ALL`
/// row whose success column holds the success percentage and whose remaining
/// numeric columns hold the means.
std::string format_report_csv(const AttackReport& report);
void write_report_csv(const AttackReport& report, const std::string& path);

/// Per-sample rows of a report CSV; the `ALL` row is skipped.
std::vector<ReportRow> read_report_rows(const std::string& path);

}  // namespace seq2sick
