#pragma once

#include <cstdint>
#include <vector>

#include "seq2sick/model.hpp"

namespace seq2sick {

enum class IndexBackend {
  kExact,        // linear scan
  kApproximate,  // inverted file over k-means cells, verified by a recall self-check at build
};

struct IndexOptions {
  IndexBackend backend = IndexBackend::kExact;
  /// Approximate backend: number of cells (0 picks ~sqrt(rows)) and cells probed per query.
  int cells = 0;
  int probes = 0;  // 0 picks cells / 4 + 1
  std::uint64_t seed = 7;
  /// Queries used by the recall self-check and the recall it must reach.
  int self_check_queries = 10000;
  double min_recall = 0.99;
};

struct Neighbor {
  int index = -1;
  double distance = 0.0;
};

struct Projection {
  TokenSequence tokens;
  Matrix snapped;  // row i = codebook row tokens[i]
};

/// Nearest-row search over an embedding codebook W. Excluded rows (the
/// reserved tokens by default) are never returned. Immutable after build.
class EmbeddingIndex {
 public:
  /// Throws ConfigError when every row is excluded, or when the approximate
  /// backend fails its recall self-check.
  static EmbeddingIndex build(const EmbeddingTable& table, const std::vector<int>& excluded = reserved_rows(),
                              const IndexOptions& options = {});

  static std::vector<int> reserved_rows();

  /// Closest non-excluded row by Euclidean distance; ties go to the lowest index.
  Neighbor nearest(const Eigen::Ref<const Vector>& query) const;
  /// Same as `nearest` on the exact backend regardless of configuration.
  Neighbor nearest_exact(const Eigen::Ref<const Vector>& query) const;

  /// Snaps every row of `embedded` to its nearest codebook row.
  Projection project_rows(const Matrix& embedded) const;

  /// Fraction of `queries` random probes on which `nearest` equals `nearest_exact`.
  double recall_at_1(int queries, std::uint64_t seed) const;

  const EmbeddingTable& table() const { return table_; }
  bool is_excluded(int row) const { return excluded_[static_cast<std::size_t>(row)]; }
  IndexBackend backend() const { return options_.backend; }
  Eigen::Index dim() const { return table_.cols(); }

 private:
  EmbeddingIndex() = default;
  Neighbor scan(const Eigen::Ref<const Vector>& query, const std::vector<int>& rows) const;
  void build_cells();

  EmbeddingTable table_;
  Matrix columns_;  // d x rows, one codebook vector per column
  std::vector<bool> excluded_;
  std::vector<int> candidates_;  // non-excluded rows, ascending
  IndexOptions options_;
  Matrix centroids_;  // d x cells
  std::vector<std::vector<int>> cell_rows_;
};

}  // namespace seq2sick
