#include "seq2sick/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "seq2sick/errors.hpp"

namespace seq2sick {

namespace {

std::map<TokenSequence, int> ngram_counts(const TokenSequence& seq, std::size_t n) {
  std::map<TokenSequence, int> counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[TokenSequence(seq.begin() + static_cast<std::ptrdiff_t>(i),
                           seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

double bleu(const TokenSequence& candidate, const TokenSequence& reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    if (candidate.size() < n) break;
    const auto cand = ngram_counts(candidate, n);
    const auto ref = ngram_counts(reference, n);
    int matches = 0;
    for (const auto& [gram, count] : cand) {
      auto it = ref.find(gram);
      if (it != ref.end()) matches += std::min(count, it->second);
    }
    const auto total = static_cast<double>(candidate.size() - n + 1);
    if (n == 1) {
      if (matches == 0) return 0.0;
      log_sum += std::log(matches / total);
    } else {
      log_sum += std::log((matches + 1.0) / (total + 1.0));
    }
    ++orders;
  }
  const double c = static_cast<double>(candidate.size());
  const double r = static_cast<double>(reference.size());
  const double brevity = c > r ? 1.0 : std::exp(1.0 - r / c);
  return std::min(1.0, brevity * std::exp(log_sum / orders));
}

int changed_words(const TokenSequence& original, const TokenSequence& adversarial) {
  if (original.size() != adversarial.size()) {
    throw std::logic_error("changed_words: adversarial input length " + std::to_string(adversarial.size()) +
                           " differs from original " + std::to_string(original.size()));
  }
  int n = 0;
  for (std::size_t i = 0; i < original.size(); ++i) n += original[i] != adversarial[i];
  return n;
}

AttackReport aggregate(std::vector<ReportRow> rows, bool successes_only) {
  if (rows.empty()) throw std::invalid_argument("aggregate: no samples");
  AttackReport report{std::move(rows), {}};
  auto& agg = report.aggregate;
  agg.samples = report.rows.size();
  std::size_t counted = 0;
  for (const auto& row : report.rows) {
    agg.successes += row.success;
    if (successes_only && !row.success) continue;
    ++counted;
    agg.mean_bleu += row.bleu;
    agg.mean_changed += row.changed;
    agg.mean_iters += row.iters;
  }
  agg.success_percent = 100.0 * static_cast<double>(agg.successes) / static_cast<double>(agg.samples);
  if (counted > 0) {
    agg.mean_bleu /= static_cast<double>(counted);
    agg.mean_changed /= static_cast<double>(counted);
    agg.mean_iters /= static_cast<double>(counted);
  }
  return report;
}

std::string format_report_csv(const AttackReport& report) {
  std::ostringstream out;
  char buf[128];
  out << "id,mode,k,success,bleu,changed,iters\n";
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6f,%d,%d", row.success ? 1 : 0, row.bleu, row.changed, row.iters);
    out << row.id << ',' << row.mode << ',' << row.k << ',' << buf << '\n';
  }
  const auto& agg = report.aggregate;
  std::string mode = report.rows.empty() ? "" : report.rows.front().mode;
  double mean_k = 0.0;
  for (const auto& row : report.rows) {
    if (row.mode != mode) mode = "mixed";
    mean_k += row.k;
  }
  if (!report.rows.empty()) mean_k /= static_cast<double>(report.rows.size());
  std::snprintf(buf, sizeof buf, "%g,%.4f,%.6f,%.4f,%.4f", mean_k, agg.success_percent, agg.mean_bleu,
                agg.mean_changed, agg.mean_iters);
  out << "ALL," << mode << ',' << buf << '\n';
  return out.str();
}

void write_report_csv(const AttackReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report " + path);
  out << format_report_csv(report);
  if (!out) throw IoError("write failed for " + path);
}

std::vector<ReportRow> read_report_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path);
  std::vector<ReportRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw InputError(path + ": line " + std::to_string(line_no) + ": expected 7 columns");
    if (cells[0] == "ALL") continue;
    try {
      rows.push_back({cells[0], cells[1], std::stoi(cells[2]), cells[3] == "1", std::stod(cells[4]),
                      std::stoi(cells[5]), std::stoi(cells[6])});
    } catch (const std::exception&) {
      throw InputError(path + ": line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

}  // namespace seq2sick
