#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "seq2sick/corpus.hpp"
#include "seq2sick/model.hpp"

namespace seq2sick {

enum class Optimizer { kSgd, kAdam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::kSgd;
  int epochs = 30;
  double learning_rate = 0.5;
  int batch_size = 16;
  int hidden = 64;
  int dim = 32;
  std::uint64_t seed = 1;
  /// Rescale the batch gradient to at most `clip_norm` when enabled.
  bool clip = false;
  double clip_norm = 5.0;

  /// Throws std::invalid_argument unless every size and the rate are positive
  /// (epochs may be 0).
  void validate() const;
};

struct TrainResult {
  ModelParams params;
  /// Mean per-token cross-entropy of the initial parameters on the corpus.
  double initial_loss = 0.0;
  /// Mean per-token cross-entropy accumulated during each epoch.
  std::vector<double> epoch_losses;
};

/// Uniform [-0.1, 0.1] initialisation from `seed`.
ModelParams init_params(int dim, int hidden, std::size_t src_vocab, std::size_t tgt_vocab, std::uint64_t seed);

/// Cross-entropy of <bos>-prefixed, <eos>-terminated target under teacher
/// forcing, summed over target positions. Accumulates parameter gradients into
/// `grads` when given.
double sequence_loss(const ModelParams& params, const SequencePair& pair, ModelParams* grads = nullptr);

/// Mean per-token teacher-forced loss over the corpus.
double corpus_loss(const ModelParams& params, const Corpus& corpus);

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Mini-batch SGD with a fixed learning rate. Throws DivergenceError as soon as
/// a batch loss is not finite.
TrainResult train(const Corpus& corpus, const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Fraction of pairs whose greedy decoding equals the target exactly.
double sequence_accuracy(const ModelParams& params, const Corpus& corpus);

/// Decoding budget used for evaluation of a source of length `source_len`.
int default_max_len(std::size_t source_len);

}  // namespace seq2sick
