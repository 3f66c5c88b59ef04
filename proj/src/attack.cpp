#include "seq2sick/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "seq2sick/errors.hpp"
#include "seq2sick/trainer.hpp"

namespace seq2sick {

void AttackConfig::validate(std::size_t target_vocab_size) const {
  if (mode == AttackMode::kKeywords) {
    if (keywords.empty()) throw ConfigError("keyword attack needs at least one keyword");
    std::set<int> seen;
    for (int k : keywords) {
      if (k < 0 || static_cast<std::size_t>(k) >= target_vocab_size) {
        throw ConfigError("keyword index " + std::to_string(k) + " outside target vocabulary");
      }
      if (is_reserved(k)) throw ConfigError("reserved token cannot be a keyword");
      if (!seen.insert(k).second) throw ConfigError("duplicate keyword " + std::to_string(k));
    }
  }
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("lambda1 and lambda2 must be >= 0");
  if (!(step_size > 0.0)) throw ConfigError("step size must be > 0");
  if (max_iters < 0) throw ConfigError("iteration count must be >= 0");
  if (beam_width < 1) throw ConfigError("beam width must be >= 1");
  if (iters_after_success < 0) throw ConfigError("iters_after_success must be >= 0");
}

// ---------------------------------------------------------------------------
// Losses

double loss_non_overlapping(const std::vector<Vector>& logits, const TokenSequence& reference, double epsilon,
                            std::vector<Vector>* grad) {
  if (logits.size() != reference.size()) {
    throw std::invalid_argument("loss_non_overlapping: reference length must equal number of steps");
  }
  if (grad) grad->assign(logits.size(), Vector());
  double total = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    const Vector& z = logits[t];
    const int s = reference[t];
    const int rival = argmax_excluding(z, s);
    const double gap = z(s) - z(rival);
    const bool active = gap > -epsilon;
    total += active ? gap : -epsilon;
    if (grad) {
      (*grad)[t] = Vector::Zero(z.size());
      if (active) {
        (*grad)[t](s) = 1.0;
        (*grad)[t](rival) = -1.0;
      }
    }
  }
  return total;
}

double keyword_term(const Vector& z, int keyword, double epsilon, Vector* grad) {
  const int rival = argmax_excluding(z, keyword);
  const double gap = z(rival) - z(keyword);
  const bool active = gap > -epsilon;
  if (grad) {
    *grad = Vector::Zero(z.size());
    if (active) {
      (*grad)(rival) = 1.0;
      (*grad)(keyword) = -1.0;
    }
  }
  return active ? gap : -epsilon;
}

std::vector<bool> position_mask(const std::vector<Vector>& logits, const std::vector<int>& keywords) {
  std::vector<bool> mask(logits.size(), false);
  for (std::size_t t = 0; t < logits.size(); ++t) {
    mask[t] = std::find(keywords.begin(), keywords.end(), argmax(logits[t])) != keywords.end();
  }
  return mask;
}

double loss_keywords(const std::vector<Vector>& logits, const std::vector<int>& keywords, double epsilon,
                     std::vector<Vector>* grad) {
  if (keywords.empty()) throw std::invalid_argument("loss_keywords: empty keyword set");
  const auto mask = position_mask(logits, keywords);
  if (grad) {
    grad->clear();
    for (const auto& z : logits) grad->push_back(Vector::Zero(z.size()));
  }
  double total = 0.0;
  Vector term_grad;
  for (int k : keywords) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_t = logits.size();
    for (std::size_t t = 0; t < logits.size(); ++t) {
      if (mask[t]) continue;
      const double v = keyword_term(logits[t], k, epsilon);
      if (v < best) {
        best = v;
        best_t = t;
      }
    }
    if (best_t == logits.size()) {
      total += kUnplaceableKeywordPenalty;
      continue;
    }
    total += best;
    if (grad) {
      keyword_term(logits[best_t], k, epsilon, &term_grad);
      (*grad)[best_t] += term_grad;
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Regularisers

double group_lasso_penalty(const Matrix& delta) { return delta.rowwise().norm().sum(); }

RegularizerValue gradient_reg_penalty(const Matrix& perturbed, const EmbeddingIndex& index,
                                      const std::vector<bool>* active) {
  RegularizerValue out;
  out.grad = Matrix::Zero(perturbed.rows(), perturbed.cols());
  out.nearest.assign(static_cast<std::size_t>(perturbed.rows()), -1);
  for (Eigen::Index i = 0; i < perturbed.rows(); ++i) {
    if (active && !(*active)[static_cast<std::size_t>(i)]) continue;
    const Vector row = perturbed.row(i).transpose();
    const Neighbor nb = index.nearest(row);
    out.nearest[static_cast<std::size_t>(i)] = nb.index;
    out.value += nb.distance;
    if (nb.distance > 0.0) {
      out.grad.row(i) = (row - index.table().row(nb.index).transpose()).transpose() / nb.distance;
    }
  }
  return out;
}

Vector prox_group_lasso_row(const Vector& row, double tau) {
  if (tau < 0.0) throw std::invalid_argument("prox_group_lasso: tau must be >= 0");
  const double norm = row.norm();
  if (norm <= tau) return Vector::Zero(row.size());
  return row * (1.0 - tau / norm);
}

Matrix prox_group_lasso(const Matrix& delta, double tau) {
  Matrix out(delta.rows(), delta.cols());
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    out.row(i) = prox_group_lasso_row(delta.row(i).transpose(), tau).transpose();
  }
  return out;
}

Matrix proximal_step(const Matrix& delta, const Matrix& grad, double step, double lambda1) {
  return prox_group_lasso(delta - step * grad, step * lambda1);
}

// ---------------------------------------------------------------------------
// Objective

bool same_branch(const ObjectiveEval& a, const ObjectiveEval& b) {
  if (a.trace.tokens != b.trace.tokens || a.nearest != b.nearest) return false;
  if (a.logit_grad.size() != b.logit_grad.size()) return false;
  for (std::size_t t = 0; t < a.logit_grad.size(); ++t) {
    if (a.logit_grad[t] != b.logit_grad[t]) return false;
  }
  return true;
}

ObjectiveEval evaluate_objective(const ModelParams& params, const Matrix& X, const Matrix& delta,
                                 const TokenSequence& reference_output, const AttackConfig& config,
                                 const EmbeddingIndex& index, const std::vector<bool>& mutable_rows) {
  const Matrix perturbed = X + delta;
  const int steps = std::max<int>(1, static_cast<int>(reference_output.size()));
  ObjectiveEval eval;
  auto objective = [&](const DecodeTrace<double>& trace) {
    LogitObjective<double> obj;
    if (config.mode == AttackMode::kNonOverlapping) {
      obj.value = loss_non_overlapping(trace.logits, reference_output, config.epsilon, &obj.grad);
    } else {
      obj.value = loss_keywords(trace.logits, config.keywords, config.epsilon, &obj.grad);
    }
    eval.logit_grad = obj.grad;
    return obj;
  };
  auto ig = input_gradient(perturbed, params, steps, objective, config.teacher_forcing ? &reference_output : nullptr);
  eval.loss = ig.objective;
  eval.trace = std::move(ig.trace);
  eval.grad = std::move(ig.grad);

  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    if (mutable_rows[static_cast<std::size_t>(i)]) {
      eval.group_lasso += delta.row(i).norm();
    } else {
      eval.grad.row(i).setZero();
    }
  }
  if (config.lambda2 > 0.0) {
    auto reg = gradient_reg_penalty(perturbed, index, &mutable_rows);
    eval.gradient_reg = reg.value;
    eval.grad += config.lambda2 * reg.grad;
    eval.nearest = std::move(reg.nearest);
  }
  eval.total = eval.loss + config.lambda1 * eval.group_lasso + config.lambda2 * eval.gradient_reg;
  return eval;
}

// ---------------------------------------------------------------------------
// Success predicates

bool is_non_overlap_success(const TokenSequence& adversarial_output, const TokenSequence& original_output) {
  const auto n = std::min(adversarial_output.size(), original_output.size());
  for (std::size_t t = 0; t < n; ++t) {
    if (adversarial_output[t] == original_output[t]) return false;
  }
  return true;
}

bool is_keyword_success(const TokenSequence& adversarial_output, const std::vector<int>& keywords) {
  return std::all_of(keywords.begin(), keywords.end(), [&](int k) {
    return std::find(adversarial_output.begin(), adversarial_output.end(), k) != adversarial_output.end();
  });
}

// ---------------------------------------------------------------------------
// Attack loop

TokenSequence decode_for_attack(const ModelParams& params, const Matrix& embedded, std::size_t input_len,
                                int beam_width) {
  const int max_len = default_max_len(input_len);
  return beam_width > 1 ? beam_decode(embedded, params, beam_width, max_len) : greedy_decode(embedded, params, max_len);
}

std::vector<bool> mutable_positions(const TokenSequence& input, const std::vector<int>& immutable) {
  std::vector<bool> out(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = !is_reserved(input[i]);
  for (int pos : immutable) {
    if (pos >= 0 && static_cast<std::size_t>(pos) < input.size()) out[static_cast<std::size_t>(pos)] = false;
  }
  return out;
}

namespace {

int count_changes(const TokenSequence& a, const TokenSequence& b) {
  int n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] != b[i];
  return n;
}

}  // namespace

AttackResult run_attack(const ModelParams& params, const TokenSequence& input, const AttackConfig& config,
                        const EmbeddingIndex& index, const AttackObserver& observer) {
  if (input.empty()) throw InputError("run_attack: empty input sequence");
  config.validate(static_cast<std::size_t>(params.tgt_vocab_size()));

  const Matrix X = embed(input, params.src_embedding);
  const auto mutable_rows = mutable_positions(input, config.immutable_positions);

  AttackResult result;
  result.original = input;
  result.keywords = config.keywords;
  result.original_output = decode_for_attack(params, X, input.size(), config.beam_width);

  auto succeeded = [&](const TokenSequence& output) {
    return config.mode == AttackMode::kNonOverlapping ? is_non_overlap_success(output, result.original_output)
                                                      : is_keyword_success(output, config.keywords);
  };

  result.adversarial = input;
  result.adversarial_output = result.original_output;
  if (succeeded(result.original_output)) {
    result.success = true;
    return result;
  }

  Matrix delta = Matrix::Zero(X.rows(), X.cols());
  int remaining_after_success = -1;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const ObjectiveEval eval =
        evaluate_objective(params, X, delta, result.original_output, config, index, mutable_rows);
    result.objective_trace.push_back(eval.total);
    result.final_objective = eval.total;

    delta = proximal_step(delta, eval.grad, config.step_size, config.lambda1);
    for (Eigen::Index i = 0; i < delta.rows(); ++i) {
      if (!mutable_rows[static_cast<std::size_t>(i)]) delta.row(i).setZero();
    }

    Projection proj = index.project_rows(X + delta);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (!mutable_rows[static_cast<std::size_t>(i)]) {
        proj.tokens[static_cast<std::size_t>(i)] = input[static_cast<std::size_t>(i)];
        proj.snapped.row(i) = X.row(i);
      }
    }
    if (config.projection == ProjectionMode::kProjected) delta = proj.snapped - X;

    const TokenSequence output = decode_for_attack(params, proj.snapped, input.size(), config.beam_width);
    const bool success = succeeded(output);
    result.iterations = iter;
    if (observer) observer({iter, &delta, &proj, &output, success, eval.total});

    const int changes = count_changes(proj.tokens, input);
    if (success) {
      if (!result.success || changes < result.changed_words) {
        result.adversarial = proj.tokens;
        result.adversarial_output = output;
        result.changed_words = changes;
      }
      result.success = true;
      if (remaining_after_success < 0) remaining_after_success = config.iters_after_success;
    } else if (!result.success) {
      result.adversarial = proj.tokens;
      result.adversarial_output = output;
      result.changed_words = changes;
    }
    if (result.success && remaining_after_success-- == 0) break;
  }
  return result;
}

}  // namespace seq2sick
