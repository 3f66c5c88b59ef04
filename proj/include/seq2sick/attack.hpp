#pragma once

// Adversarial input search against a seq2seq model by projected proximal
// gradient descent.
//
// The objective over the input perturbation delta (one row per input word) is
//
//   L(X + delta) + lambda1 * sum_i ||delta_i|| + lambda2 * sum_i min_j ||x_i + delta_i - w_j||
//
// where L is either the non-overlapping hinge loss or the masked keyword loss.
// The group-lasso term is handled by its proximal operator; the other two by
// gradient steps. Rows of X + delta are snapped back onto the codebook to read
// off a discrete adversarial sentence.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "seq2sick/embedding_index.hpp"
#include "seq2sick/model.hpp"

namespace seq2sick {

enum class AttackMode { kNonOverlapping, kKeywords };

enum class ProjectionMode {
  /// Keep a continuous delta for the gradient; project only to read off and
  /// score the discrete sentence each iteration.
  kHybrid,
  /// Replace delta by its projection every iteration.
  kProjected,
};

/// Value used for a keyword that has no unmasked position left to occupy.
inline constexpr double kUnplaceableKeywordPenalty = 1e6;

struct AttackConfig {
  AttackMode mode = AttackMode::kNonOverlapping;
  std::vector<int> keywords;  // target-vocabulary indices
  double epsilon = 1.0;       // confidence margin
  double lambda1 = 1.0;       // group lasso weight
  double lambda2 = 1.0;       // gradient regularisation weight
  double step_size = 0.5;     // eta
  int max_iters = 100;        // T
  ProjectionMode projection = ProjectionMode::kHybrid;
  /// Feed the original output instead of the model's own predictions when
  /// computing attack-time logits.
  bool teacher_forcing = false;
  /// Width used to decode outputs for success checks; 1 means greedy.
  int beam_width = 1;
  /// Input positions that must not change, in addition to reserved tokens.
  std::vector<int> immutable_positions;
  /// Keep iterating this many steps after the first success, retaining the
  /// successful iterate with the fewest changed words.
  int iters_after_success = 0;

  /// Throws ConfigError on an invalid combination (empty or reserved
  /// keywords, non-positive step size, negative weights, ...).
  void validate(std::size_t target_vocab_size) const;
};

struct AttackResult {
  TokenSequence original;
  TokenSequence adversarial;
  TokenSequence original_output;
  TokenSequence adversarial_output;
  std::vector<int> keywords;
  bool success = false;
  int changed_words = 0;
  int iterations = 0;
  double final_objective = 0.0;
  std::vector<double> objective_trace;  // one value per iteration
};

// ---------------------------------------------------------------------------
// Losses on decoder logits. When `grad` is non-null it receives dLoss/dz_t for
// every step (same shapes as `logits`). Exact hinge ties select the -epsilon
// branch and so contribute a zero gradient.

double loss_non_overlapping(const std::vector<Vector>& logits, const TokenSequence& reference, double epsilon,
                            std::vector<Vector>* grad = nullptr);

/// max{-eps, max_{y != k} z(y) - z(k)}.
double keyword_term(const Vector& z, int keyword, double epsilon, Vector* grad = nullptr);

/// Positions whose top-1 token is one of the keywords.
std::vector<bool> position_mask(const std::vector<Vector>& logits, const std::vector<int>& keywords);

/// Sum over keywords of the smallest keyword_term among unmasked positions.
/// A keyword with no unmasked position contributes kUnplaceableKeywordPenalty.
double loss_keywords(const std::vector<Vector>& logits, const std::vector<int>& keywords, double epsilon,
                     std::vector<Vector>* grad = nullptr);

// ---------------------------------------------------------------------------
// Regularisers and the proximal step

/// Sum of row norms.
double group_lasso_penalty(const Matrix& delta);

struct RegularizerValue {
  double value = 0.0;
  Matrix grad;                // one unit vector (or zero) per row
  std::vector<int> nearest;   // codebook row nearest to each input row
};

/// Sum over rows of the distance to the nearest codebook row. Rows with
/// `active[i] == false` contribute nothing.
RegularizerValue gradient_reg_penalty(const Matrix& perturbed, const EmbeddingIndex& index,
                                      const std::vector<bool>* active = nullptr);

/// Block soft-thresholding of one row.
Vector prox_group_lasso_row(const Vector& row, double tau);
/// Row-wise block soft-thresholding: prox of tau * sum_i ||delta_i||.
Matrix prox_group_lasso(const Matrix& delta, double tau);

/// delta <- prox(delta - step * grad, step * lambda1).
Matrix proximal_step(const Matrix& delta, const Matrix& grad, double step, double lambda1);

// ---------------------------------------------------------------------------
// Objective

struct ObjectiveEval {
  double loss = 0.0;          // L
  double group_lasso = 0.0;   // sum ||delta_i|| over mutable rows
  double gradient_reg = 0.0;  // sum of nearest-codebook distances over mutable rows
  double total = 0.0;         // loss + lambda1 * group_lasso + lambda2 * gradient_reg
  Matrix grad;                // d(loss + lambda2 * gradient_reg)/d delta; zero on immutable rows
  DecodeTrace<double> trace;
  std::vector<Vector> logit_grad;  // dL/dz_t
  std::vector<int> nearest;
};

/// True when both evaluations took the same piecewise branch: identical fed
/// tokens, hinge activity, keyword placements, and nearest codebook rows.
bool same_branch(const ObjectiveEval& a, const ObjectiveEval& b);

/// Evaluates the objective at X + delta with logits decoded for
/// `reference_output.size()` steps.
ObjectiveEval evaluate_objective(const ModelParams& params, const Matrix& X, const Matrix& delta,
                                 const TokenSequence& reference_output, const AttackConfig& config,
                                 const EmbeddingIndex& index, const std::vector<bool>& mutable_rows);

// ---------------------------------------------------------------------------
// Success predicates

/// No position shared by both sequences holds the same token.
bool is_non_overlap_success(const TokenSequence& adversarial_output, const TokenSequence& original_output);
/// Every keyword occurs somewhere in the output.
bool is_keyword_success(const TokenSequence& adversarial_output, const std::vector<int>& keywords);

// ---------------------------------------------------------------------------
// Attack loop

/// Snapshot handed to an observer after each iteration.
struct AttackIterate {
  int iteration = 0;
  const Matrix* delta = nullptr;
  const Projection* projection = nullptr;
  const TokenSequence* output = nullptr;
  bool success = false;
  double objective = 0.0;
};

using AttackObserver = std::function<void(const AttackIterate&)>;

/// Decodes `input` for success checks with the configured beam width.
TokenSequence decode_for_attack(const ModelParams& params, const Matrix& embedded, std::size_t input_len,
                                int beam_width);

/// Mutable input positions: everything except reserved tokens and the
/// configured immutable positions.
std::vector<bool> mutable_positions(const TokenSequence& input, const std::vector<int>& immutable);

AttackResult run_attack(const ModelParams& params, const TokenSequence& input, const AttackConfig& config,
                        const EmbeddingIndex& index, const AttackObserver& observer = {});

}  // namespace seq2sick
