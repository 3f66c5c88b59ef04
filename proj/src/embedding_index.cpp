#include "seq2sick/embedding_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "seq2sick/errors.hpp"
#include "seq2sick/random.hpp"

namespace seq2sick {

std::vector<int> EmbeddingIndex::reserved_rows() { return {kPad, kBos, kEos, kUnk}; }

EmbeddingIndex EmbeddingIndex::build(const EmbeddingTable& table, const std::vector<int>& excluded,
                                     const IndexOptions& options) {
  EmbeddingIndex index;
  index.table_ = table;
  index.columns_ = table.transpose();
  index.options_ = options;
  index.excluded_.assign(static_cast<std::size_t>(table.rows()), false);
  for (int row : excluded) {
    if (row >= 0 && row < table.rows()) index.excluded_[static_cast<std::size_t>(row)] = true;
  }
  for (int row = 0; row < table.rows(); ++row) {
    if (!index.excluded_[static_cast<std::size_t>(row)]) index.candidates_.push_back(row);
  }
  if (index.candidates_.empty()) throw ConfigError("embedding index: every codebook row is excluded");

  if (options.backend == IndexBackend::kApproximate) {
    index.build_cells();
    const double recall = index.recall_at_1(options.self_check_queries, options.seed + 1);
    if (recall < options.min_recall) {
      throw ConfigError("approximate embedding index failed its self-check: recall@1 " + std::to_string(recall) +
                        " < " + std::to_string(options.min_recall));
    }
  }
  return index;
}

Neighbor EmbeddingIndex::scan(const Eigen::Ref<const Vector>& query, const std::vector<int>& rows) const {
  Neighbor best{-1, std::numeric_limits<double>::infinity()};
  double best_sq = std::numeric_limits<double>::infinity();
  for (int row : rows) {
    const double sq = (columns_.col(row) - query).squaredNorm();
    if (sq < best_sq || (sq == best_sq && row < best.index)) {
      best_sq = sq;
      best.index = row;
    }
  }
  best.distance = std::sqrt(best_sq);
  return best;
}

Neighbor EmbeddingIndex::nearest_exact(const Eigen::Ref<const Vector>& query) const {
  return scan(query, candidates_);
}

Neighbor EmbeddingIndex::nearest(const Eigen::Ref<const Vector>& query) const {
  if (options_.backend == IndexBackend::kExact) return nearest_exact(query);

  const auto cells = static_cast<Eigen::Index>(cell_rows_.size());
  std::vector<std::pair<double, int>> order;
  order.reserve(static_cast<std::size_t>(cells));
  for (Eigen::Index c = 0; c < cells; ++c) {
    order.emplace_back((centroids_.col(c) - query).squaredNorm(), static_cast<int>(c));
  }
  const auto probes = std::min<std::size_t>(order.size(), static_cast<std::size_t>(options_.probes));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(probes), order.end());
  std::vector<int> rows;
  for (std::size_t p = 0; p < probes; ++p) {
    const auto& members = cell_rows_[static_cast<std::size_t>(order[p].second)];
    rows.insert(rows.end(), members.begin(), members.end());
  }
  std::sort(rows.begin(), rows.end());
  return scan(query, rows);
}

void EmbeddingIndex::build_cells() {
  const auto n = static_cast<int>(candidates_.size());
  int cells = options_.cells > 0 ? options_.cells : std::max(1, static_cast<int>(std::lround(std::sqrt(n))));
  cells = std::min(cells, n);
  if (options_.probes <= 0) options_.probes = cells / 4 + 1;

  Rng rng(options_.seed);
  std::vector<int> seeds = candidates_;
  rng.shuffle(seeds);
  centroids_.resize(columns_.rows(), cells);
  for (int c = 0; c < cells; ++c) centroids_.col(c) = columns_.col(seeds[static_cast<std::size_t>(c)]);

  std::vector<int> assignment(candidates_.size(), -1);
  for (int iter = 0; iter < 25; ++iter) {
    bool changed = false;
    for (std::size_t k = 0; k < candidates_.size(); ++k) {
      int best = 0;
      double best_sq = std::numeric_limits<double>::infinity();
      for (int c = 0; c < cells; ++c) {
        const double sq = (centroids_.col(c) - columns_.col(candidates_[k])).squaredNorm();
        if (sq < best_sq) {
          best_sq = sq;
          best = c;
        }
      }
      changed |= assignment[k] != best;
      assignment[k] = best;
    }
    if (!changed) break;
    Matrix sums = Matrix::Zero(columns_.rows(), cells);
    std::vector<int> counts(static_cast<std::size_t>(cells), 0);
    for (std::size_t k = 0; k < candidates_.size(); ++k) {
      sums.col(assignment[k]) += columns_.col(candidates_[k]);
      ++counts[static_cast<std::size_t>(assignment[k])];
    }
    for (int c = 0; c < cells; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) centroids_.col(c) = sums.col(c) / counts[static_cast<std::size_t>(c)];
    }
  }
  cell_rows_.assign(static_cast<std::size_t>(cells), {});
  for (std::size_t k = 0; k < candidates_.size(); ++k) {
    cell_rows_[static_cast<std::size_t>(assignment[k])].push_back(candidates_[k]);
  }
}

Projection EmbeddingIndex::project_rows(const Matrix& embedded) const {
  Projection out;
  out.tokens.reserve(static_cast<std::size_t>(embedded.rows()));
  out.snapped.resize(embedded.rows(), embedded.cols());
  for (Eigen::Index i = 0; i < embedded.rows(); ++i) {
    const int row = nearest(embedded.row(i).transpose()).index;
    out.tokens.push_back(row);
    out.snapped.row(i) = table_.row(row);
  }
  return out;
}

double EmbeddingIndex::recall_at_1(int queries, std::uint64_t seed) const {
  if (queries <= 0) return 1.0;
  Rng rng(seed);
  // Perturbed codebook rows, with noise on the scale of the codebook spread.
  const double spread = std::sqrt((columns_.colwise() - columns_.rowwise().mean()).squaredNorm() /
                                  static_cast<double>(std::max<Eigen::Index>(1, columns_.size())));
  int hits = 0;
  Vector q(columns_.rows());
  for (int k = 0; k < queries; ++k) {
    const int base = candidates_[rng.below(candidates_.size())];
    for (Eigen::Index j = 0; j < q.size(); ++j) q(j) = columns_(j, base) + spread * rng.uniform(-1.0, 1.0);
    if (nearest(q).index == nearest_exact(q).index) ++hits;
  }
  return static_cast<double>(hits) / queries;
}

}  // namespace seq2sick
