#include "seq2sick/trainer.hpp"

#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>

#include "seq2sick/errors.hpp"
#include "seq2sick/random.hpp"

namespace seq2sick {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 1 || hidden < 1 || dim < 1) throw std::invalid_argument("sizes must be positive");
  if (clip && !(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
}

ModelParams init_params(int dim, int hidden, std::size_t src_vocab, std::size_t tgt_vocab, std::uint64_t seed) {
  ModelParams params = ModelParams::zeros(dim, hidden, static_cast<Eigen::Index>(src_vocab),
                                          static_cast<Eigen::Index>(tgt_vocab));
  Rng rng(seed);
  params.for_each_block([&](auto& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r)
      for (Eigen::Index c = 0; c < block.cols(); ++c) block(r, c) = rng.uniform(-0.1, 0.1);
  });
  return params;
}

double sequence_loss(const ModelParams& params, const SequencePair& pair, ModelParams* grads) {
  const Matrix X = embed(pair.source, params.src_embedding);
  TokenSequence gold = pair.target;
  gold.push_back(kEos);
  const int steps = static_cast<int>(gold.size());
  auto pass = forward(X, params, steps, &pair.target, grads != nullptr);

  double loss = 0.0;
  std::vector<Vector> dlogits;
  if (grads) dlogits.reserve(gold.size());
  for (std::size_t t = 0; t < gold.size(); ++t) {
    const auto& p = pass.trace.probs[t];
    loss -= std::log(std::max(p(gold[t]), 1e-300));
    if (grads) {
      Vector dz = p;
      dz(gold[t]) -= 1.0;
      dlogits.push_back(std::move(dz));
    }
  }
  if (grads) {
    const Matrix dX = backward(pass, params, dlogits, grads);
    for (std::size_t i = 0; i < pair.source.size(); ++i) {
      grads->src_embedding.row(pair.source[i]) += dX.row(static_cast<Eigen::Index>(i));
    }
  }
  return loss;
}

double corpus_loss(const ModelParams& params, const Corpus& corpus) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& pair : corpus.pairs) {
    total += sequence_loss(params, pair);
    tokens += pair.target.size() + 1;
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

namespace {

/// Flat views over every parameter block, in checkpoint order.
std::vector<Eigen::Map<Eigen::VectorXd>> flat_blocks(ModelParams& params) {
  std::vector<Eigen::Map<Eigen::VectorXd>> out;
  params.for_each_block([&](auto& block) { out.emplace_back(block.data(), block.size()); });
  return out;
}

class Adam {
 public:
  explicit Adam(const ModelParams& shape) : m_(zeros_like(shape)), v_(zeros_like(shape)) {}

  void step(ModelParams& params, ModelParams& grads, double lr, double grad_scale) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, t_), c2 = 1.0 - std::pow(kBeta2, t_);
    auto p = flat_blocks(params), g = flat_blocks(grads), m = flat_blocks(m_), v = flat_blocks(v_);
    for (std::size_t b = 0; b < p.size(); ++b) {
      const Eigen::VectorXd grad = grad_scale * g[b];
      m[b] = kBeta1 * m[b] + (1.0 - kBeta1) * grad;
      v[b] = kBeta2 * v[b] + (1.0 - kBeta2) * grad.cwiseProduct(grad);
      p[b].array() -= lr * (m[b].array() / c1) / ((v[b].array() / c2).sqrt() + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  static ModelParams zeros_like(const ModelParams& p) {
    return ModelParams::zeros(p.dim(), p.hidden(), p.src_vocab_size(), p.tgt_vocab_size());
  }
  ModelParams m_, v_;
  int t_ = 0;
};

double squared_norm(const ModelParams& params) {
  double sum = 0.0;
  params.for_each_block([&](const auto& block) { sum += block.squaredNorm(); });
  return sum;
}

}  // namespace

TrainResult train(const Corpus& corpus, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (corpus.pairs.empty()) throw InputError("cannot train on an empty corpus");
  corpus.validate();

  TrainResult result{init_params(config.dim, config.hidden, corpus.source_vocab.size(),
                                 corpus.target_vocab.size(), config.seed),
                     0.0,
                     {}};
  ModelParams& params = result.params;
  result.initial_loss = corpus_loss(params, corpus);

  Rng rng(config.seed + 1);
  std::vector<std::size_t> order(corpus.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  ModelParams grads = ModelParams::zeros(params.dim(), params.hidden(), params.src_vocab_size(),
                                         params.tgt_vocab_size());
  std::optional<Adam> adam;
  if (config.optimizer == Optimizer::kAdam) adam.emplace(params);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& pair = corpus.pairs[order[k]];
        batch_loss += sequence_loss(params, pair, &grads);
        epoch_tokens += pair.target.size() + 1;
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training diverged in epoch " + std::to_string(epoch) + " (loss " +
                              std::to_string(batch_loss) + ")");
      }
      epoch_loss += batch_loss;

      // Gradient of the batch-mean sequence loss.
      double grad_scale = 1.0 / static_cast<double>(end - start);
      if (config.clip) {
        const double norm = std::sqrt(squared_norm(grads)) * grad_scale;
        if (norm > config.clip_norm) grad_scale *= config.clip_norm / norm;
      }
      if (adam) {
        adam->step(params, grads, config.learning_rate, grad_scale);
      } else {
        add_scaled(params, grads, -config.learning_rate * grad_scale);
      }
    }
    const double mean = epoch_loss / static_cast<double>(epoch_tokens);
    result.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

int default_max_len(std::size_t source_len) { return static_cast<int>(source_len) + 4; }

double sequence_accuracy(const ModelParams& params, const Corpus& corpus) {
  if (corpus.pairs.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& pair : corpus.pairs) {
    const int max_len = std::max(default_max_len(pair.source.size()), static_cast<int>(pair.target.size()) + 1);
    if (greedy_decode(embed(pair.source, params.src_embedding), params, max_len) == pair.target) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.pairs.size());
}

}  // namespace seq2sick
