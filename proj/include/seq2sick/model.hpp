#pragma once

// Single-layer LSTM encoder-decoder with a fixed context vector c = h_N.
//
// The decoder starts from h_0 = c, cell_0 = 0 and at every step reads the
// concatenation [embedding(y_{t-1}); c]. Logits are z_t = W_out h_t + b_out.
//
// Everything is templated on the scalar type; the rest of the toolkit uses
// the `double` aliases at the bottom of this file.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seq2sick/errors.hpp"
#include "seq2sick/vocab.hpp"

namespace seq2sick {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Codebook of word embeddings, one row per vocabulary entry.
template <typename Scalar>
using EmbeddingTableT = MatrixX<Scalar>;

/// Gate weights stacked as [input; forget; output; candidate], each block
/// `hidden` rows tall.
template <typename Scalar>
struct LstmWeightsT {
  MatrixX<Scalar> input;      // 4H x in
  MatrixX<Scalar> recurrent;  // 4H x H
  VectorX<Scalar> bias;       // 4H

  static LstmWeightsT zeros(Eigen::Index in, Eigen::Index hidden) {
    return {MatrixX<Scalar>::Zero(4 * hidden, in), MatrixX<Scalar>::Zero(4 * hidden, hidden),
            VectorX<Scalar>::Zero(4 * hidden)};
  }

  Eigen::Index hidden_size() const { return recurrent.cols(); }
  Eigen::Index input_size() const { return input.cols(); }

  void set_zero() {
    input.setZero();
    recurrent.setZero();
    bias.setZero();
  }
};

template <typename Scalar>
struct ModelParamsT {
  EmbeddingTableT<Scalar> src_embedding;  // |src vocab| x d
  EmbeddingTableT<Scalar> tgt_embedding;  // |tgt vocab| x d
  LstmWeightsT<Scalar> encoder;           // in = d
  LstmWeightsT<Scalar> decoder;           // in = d + H
  MatrixX<Scalar> output;                 // |tgt vocab| x H
  VectorX<Scalar> output_bias;            // |tgt vocab|

  static ModelParamsT zeros(Eigen::Index dim, Eigen::Index hidden, Eigen::Index src_vocab,
                            Eigen::Index tgt_vocab) {
    if (dim < 1 || hidden < 1 || src_vocab < 1 || tgt_vocab < 1) {
      throw std::invalid_argument("model dimensions must be positive");
    }
    return {MatrixX<Scalar>::Zero(src_vocab, dim),
            MatrixX<Scalar>::Zero(tgt_vocab, dim),
            LstmWeightsT<Scalar>::zeros(dim, hidden),
            LstmWeightsT<Scalar>::zeros(dim + hidden, hidden),
            MatrixX<Scalar>::Zero(tgt_vocab, hidden),
            VectorX<Scalar>::Zero(tgt_vocab)};
  }

  Eigen::Index dim() const { return src_embedding.cols(); }
  Eigen::Index hidden() const { return encoder.hidden_size(); }
  Eigen::Index src_vocab_size() const { return src_embedding.rows(); }
  Eigen::Index tgt_vocab_size() const { return tgt_embedding.rows(); }

  /// Visits every parameter block in checkpoint order.
  template <typename Fn>
  void for_each_block(Fn&& fn) {
    fn(src_embedding), fn(tgt_embedding);
    fn(encoder.input), fn(encoder.recurrent), fn(encoder.bias);
    fn(decoder.input), fn(decoder.recurrent), fn(decoder.bias);
    fn(output), fn(output_bias);
  }
  template <typename Fn>
  void for_each_block(Fn&& fn) const {
    fn(src_embedding), fn(tgt_embedding);
    fn(encoder.input), fn(encoder.recurrent), fn(encoder.bias);
    fn(decoder.input), fn(decoder.recurrent), fn(decoder.bias);
    fn(output), fn(output_bias);
  }

  void set_zero() {
    for_each_block([](auto& block) { block.setZero(); });
  }

  /// Throws InputError when any block disagrees with (d, H, vocab sizes).
  void validate() const {
    const auto d = dim(), h = hidden();
    auto check = [](bool ok, const char* what) {
      if (!ok) throw InputError(std::string("inconsistent model dimensions: ") + what);
    };
    check(d > 0 && h > 0, "d and hidden must be positive");
    check(tgt_embedding.cols() == d, "target embedding width");
    check(encoder.input.rows() == 4 * h && encoder.input.cols() == d, "encoder input weights");
    check(encoder.recurrent.rows() == 4 * h && encoder.recurrent.cols() == h, "encoder recurrent weights");
    check(encoder.bias.size() == 4 * h, "encoder bias");
    check(decoder.input.rows() == 4 * h && decoder.input.cols() == d + h, "decoder input weights");
    check(decoder.recurrent.rows() == 4 * h && decoder.recurrent.cols() == h, "decoder recurrent weights");
    check(decoder.bias.size() == 4 * h, "decoder bias");
    check(output.rows() == tgt_vocab_size() && output.cols() == h, "output projection");
    check(output_bias.size() == tgt_vocab_size(), "output bias");
  }
};

/// dst += scale * src, block by block.
template <typename Scalar>
void add_scaled(ModelParamsT<Scalar>& dst, const ModelParamsT<Scalar>& src, Scalar scale) {
  auto lstm = [scale](LstmWeightsT<Scalar>& d, const LstmWeightsT<Scalar>& s) {
    d.input += scale * s.input;
    d.recurrent += scale * s.recurrent;
    d.bias += scale * s.bias;
  };
  dst.src_embedding += scale * src.src_embedding;
  dst.tgt_embedding += scale * src.tgt_embedding;
  lstm(dst.encoder, src.encoder);
  lstm(dst.decoder, src.decoder);
  dst.output += scale * src.output;
  dst.output_bias += scale * src.output_bias;
}

// ---------------------------------------------------------------------------
// Elementwise helpers

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  return x >= Scalar(0) ? Scalar(1) / (Scalar(1) + exp(-x)) : exp(x) / (Scalar(1) + exp(x));
}

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

/// Largest entry excluding index `skip`; ties resolve to the lowest index.
template <typename Derived>
int argmax_excluding(const Eigen::MatrixBase<Derived>& v, int skip) {
  int best = -1;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i == skip) continue;
    if (best < 0 || v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> p = (z.array() - z.maxCoeff()).exp().matrix();
  p /= p.sum();
  return p;
}

template <typename Derived>
VectorX<typename Derived::Scalar> log_softmax(const Eigen::MatrixBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = z.maxCoeff();
  const Scalar lse = m + std::log((z.array() - m).exp().sum());
  return (z.array() - lse).matrix();
}

// ---------------------------------------------------------------------------
// LSTM cell

template <typename Scalar>
struct LstmState {
  VectorX<Scalar> h;
  VectorX<Scalar> c;
};

/// Everything the reverse pass needs from one cell evaluation.
template <typename Scalar>
struct LstmCache {
  VectorX<Scalar> x, h_prev, c_prev;
  VectorX<Scalar> in_gate, forget_gate, out_gate, candidate;
  VectorX<Scalar> c, tanh_c;
};

template <typename Scalar>
LstmState<Scalar> lstm_cell(const VectorX<Scalar>& x, const VectorX<Scalar>& h_prev,
                            const VectorX<Scalar>& c_prev, const LstmWeightsT<Scalar>& w,
                            LstmCache<Scalar>* cache = nullptr) {
  const Eigen::Index H = w.hidden_size();
  if (x.size() != w.input_size() || h_prev.size() != H || c_prev.size() != H) {
    throw std::invalid_argument("lstm_cell: dimension mismatch");
  }
  const VectorX<Scalar> a = w.input * x + w.recurrent * h_prev + w.bias;
  VectorX<Scalar> i = a.segment(0, H).unaryExpr([](Scalar v) { return sigmoid(v); });
  VectorX<Scalar> f = a.segment(H, H).unaryExpr([](Scalar v) { return sigmoid(v); });
  VectorX<Scalar> o = a.segment(2 * H, H).unaryExpr([](Scalar v) { return sigmoid(v); });
  VectorX<Scalar> g = a.segment(3 * H, H).array().tanh().matrix();

  LstmState<Scalar> out;
  out.c = (f.array() * c_prev.array() + i.array() * g.array()).matrix();
  VectorX<Scalar> tanh_c = out.c.array().tanh().matrix();
  out.h = (o.array() * tanh_c.array()).matrix();
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->in_gate = std::move(i);
    cache->forget_gate = std::move(f);
    cache->out_gate = std::move(o);
    cache->candidate = std::move(g);
    cache->c = out.c;
    cache->tanh_c = std::move(tanh_c);
  }
  return out;
}

/// Reverse of lstm_cell. Takes the upstream gradients on (h, c), returns the
/// gradient on the input x and overwrites dh/dc with the gradients on
/// (h_prev, c_prev). Parameter gradients are accumulated into `grads` when set.
template <typename Scalar>
VectorX<Scalar> lstm_cell_backward(const LstmCache<Scalar>& cache, const LstmWeightsT<Scalar>& w,
                                   VectorX<Scalar>& dh, VectorX<Scalar>& dc,
                                   LstmWeightsT<Scalar>* grads = nullptr) {
  const Eigen::Index H = w.hidden_size();
  const auto& i = cache.in_gate.array();
  const auto& f = cache.forget_gate.array();
  const auto& o = cache.out_gate.array();
  const auto& g = cache.candidate.array();
  const auto& tc = cache.tanh_c.array();

  const auto dc_total = (dc.array() + dh.array() * o * (Scalar(1) - tc * tc)).eval();
  VectorX<Scalar> da(4 * H);
  da.segment(0, H) = (dc_total * g * i * (Scalar(1) - i)).matrix();
  da.segment(H, H) = (dc_total * cache.c_prev.array() * f * (Scalar(1) - f)).matrix();
  da.segment(2 * H, H) = (dh.array() * tc * o * (Scalar(1) - o)).matrix();
  da.segment(3 * H, H) = (dc_total * i * (Scalar(1) - g * g)).matrix();

  if (grads) {
    grads->input.noalias() += da * cache.x.transpose();
    grads->recurrent.noalias() += da * cache.h_prev.transpose();
    grads->bias += da;
  }
  dc = (dc_total * f).matrix();
  dh.noalias() = w.recurrent.transpose() * da;
  return w.input.transpose() * da;
}

// ---------------------------------------------------------------------------
// Encoder

template <typename Scalar>
struct EncoderState {
  std::vector<VectorX<Scalar>> hidden;  // h_1..h_N
  VectorX<Scalar> context;              // c = h_N
  std::vector<LstmCache<Scalar>> caches;
};

/// Row i of the result is table row seq[i].
template <typename Scalar>
MatrixX<Scalar> embed(const TokenSequence& seq, const EmbeddingTableT<Scalar>& table) {
  MatrixX<Scalar> X(static_cast<Eigen::Index>(seq.size()), table.cols());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] < 0 || seq[i] >= table.rows()) {
      throw InputError("token index " + std::to_string(seq[i]) + " out of range for table of " +
                       std::to_string(table.rows()) + " rows");
    }
    X.row(static_cast<Eigen::Index>(i)) = table.row(seq[i]);
  }
  return X;
}

template <typename Scalar>
EncoderState<Scalar> encode(const MatrixX<Scalar>& X, const ModelParamsT<Scalar>& params,
                            bool keep_caches = false) {
  if (X.rows() < 1) throw InputError("encode: empty input sequence");
  if (X.cols() != params.dim()) throw InputError("encode: embedding width mismatch");
  const Eigen::Index H = params.hidden();
  EncoderState<Scalar> state;
  state.hidden.reserve(static_cast<std::size_t>(X.rows()));
  if (keep_caches) state.caches.resize(static_cast<std::size_t>(X.rows()));
  VectorX<Scalar> h = VectorX<Scalar>::Zero(H), c = VectorX<Scalar>::Zero(H);
  for (Eigen::Index t = 0; t < X.rows(); ++t) {
    auto next = lstm_cell<Scalar>(X.row(t).transpose(), h, c, params.encoder,
                                  keep_caches ? &state.caches[static_cast<std::size_t>(t)] : nullptr);
    h = std::move(next.h);
    c = std::move(next.c);
    state.hidden.push_back(h);
  }
  state.context = state.hidden.back();
  return state;
}

// ---------------------------------------------------------------------------
// Decoder

template <typename Scalar>
LstmState<Scalar> decoder_start(const VectorX<Scalar>& context) {
  return {context, VectorX<Scalar>::Zero(context.size())};
}

/// One decoder step from `state` after emitting `prev_token`. Returns the
/// logits and advances `state`.
template <typename Scalar>
VectorX<Scalar> decode_step(LstmState<Scalar>& state, int prev_token, const VectorX<Scalar>& context,
                            const ModelParamsT<Scalar>& params, LstmCache<Scalar>* cache = nullptr) {
  const Eigen::Index d = params.dim();
  VectorX<Scalar> input(d + context.size());
  input.head(d) = params.tgt_embedding.row(prev_token).transpose();
  input.tail(context.size()) = context;
  state = lstm_cell<Scalar>(input, state.h, state.c, params.decoder, cache);
  return params.output * state.h + params.output_bias;
}

template <typename Scalar>
struct DecodeTrace {
  std::vector<VectorX<Scalar>> logits;  // z_1..z_M
  std::vector<VectorX<Scalar>> probs;   // softmax(z_t)
  TokenSequence tokens;                 // argmax z_t (greedy)
};

/// Forward activations of a full encoder-decoder pass, kept for backprop.
template <typename Scalar>
struct ForwardPass {
  EncoderState<Scalar> encoder;
  std::vector<LstmCache<Scalar>> decoder_caches;
  TokenSequence fed_tokens;  // y_0 = <bos>, y_1, ... fed into each step
  DecodeTrace<Scalar> trace;
};

/// Runs the encoder on X and the decoder for exactly `steps` steps from <bos>.
/// Each step feeds the previous argmax token, or `teacher[t-1]` when a teacher
/// sequence is supplied.
template <typename Scalar>
ForwardPass<Scalar> forward(const MatrixX<Scalar>& X, const ModelParamsT<Scalar>& params, int steps,
                            const TokenSequence* teacher = nullptr, bool keep_caches = true) {
  if (steps < 1) throw std::invalid_argument("decode: steps must be >= 1");
  if (teacher && teacher->size() + 1 < static_cast<std::size_t>(steps)) {
    throw std::invalid_argument("decode: teacher sequence shorter than steps - 1");
  }
  ForwardPass<Scalar> pass;
  pass.encoder = encode(X, params, keep_caches);
  const VectorX<Scalar>& context = pass.encoder.context;
  auto state = decoder_start(context);
  if (keep_caches) pass.decoder_caches.resize(static_cast<std::size_t>(steps));
  int prev = kBos;
  for (int t = 0; t < steps; ++t) {
    pass.fed_tokens.push_back(prev);
    VectorX<Scalar> z = decode_step(state, prev, context, params,
                                    keep_caches ? &pass.decoder_caches[static_cast<std::size_t>(t)] : nullptr);
    const int emitted = argmax(z);
    pass.trace.probs.push_back(softmax(z));
    pass.trace.logits.push_back(std::move(z));
    pass.trace.tokens.push_back(emitted);
    prev = teacher ? (*teacher)[static_cast<std::size_t>(t)] : emitted;
  }
  return pass;
}

template <typename Scalar>
DecodeTrace<Scalar> decode_logits(const MatrixX<Scalar>& X, const ModelParamsT<Scalar>& params, int steps,
                                  const TokenSequence* teacher = nullptr) {
  return forward(X, params, steps, teacher, false).trace;
}

/// Reverse pass through decoder and encoder. `dlogits[t]` is dObjective/dz_t.
/// Returns dObjective/dX. When `grads` is set, parameter gradients (including
/// the rows of both embedding tables that were used) are accumulated into it;
/// the gradient on X is *not* folded into the source embedding table.
template <typename Scalar>
MatrixX<Scalar> backward(const ForwardPass<Scalar>& pass, const ModelParamsT<Scalar>& params,
                         const std::vector<VectorX<Scalar>>& dlogits, ModelParamsT<Scalar>* grads = nullptr) {
  const Eigen::Index H = params.hidden();
  const Eigen::Index d = params.dim();
  const auto steps = pass.decoder_caches.size();
  if (dlogits.size() != steps) throw std::invalid_argument("backward: one logit gradient per step required");
  if (pass.encoder.caches.empty()) throw std::invalid_argument("backward: forward pass kept no caches");

  VectorX<Scalar> dcontext = VectorX<Scalar>::Zero(H);
  VectorX<Scalar> dh = VectorX<Scalar>::Zero(H), dc = VectorX<Scalar>::Zero(H);
  for (std::size_t t = steps; t-- > 0;) {
    const auto& dz = dlogits[t];
    dh.noalias() += params.output.transpose() * dz;
    if (grads) {
      const auto& cache = pass.decoder_caches[t];
      grads->output.noalias() += dz * (cache.out_gate.array() * cache.tanh_c.array()).matrix().transpose();
      grads->output_bias += dz;
    }
    VectorX<Scalar> dinput =
        lstm_cell_backward(pass.decoder_caches[t], params.decoder, dh, dc, grads ? &grads->decoder : nullptr);
    dcontext += dinput.tail(H);
    if (grads) grads->tgt_embedding.row(pass.fed_tokens[t]) += dinput.head(d).transpose();
  }
  // h_0 = c; the initial decoder cell is a constant.
  dcontext += dh;

  const auto N = pass.encoder.caches.size();
  MatrixX<Scalar> dX(static_cast<Eigen::Index>(N), d);
  dh = dcontext;
  dc.setZero();
  for (std::size_t t = N; t-- > 0;) {
    dX.row(static_cast<Eigen::Index>(t)) =
        lstm_cell_backward(pass.encoder.caches[t], params.encoder, dh, dc, grads ? &grads->encoder : nullptr)
            .transpose();
  }
  return dX;
}

/// Value of a scalar objective of the logits and its gradient per step.
template <typename Scalar>
struct LogitObjective {
  Scalar value = Scalar(0);
  std::vector<VectorX<Scalar>> grad;
};

template <typename Scalar>
struct InputGradient {
  Scalar objective = Scalar(0);
  MatrixX<Scalar> grad;  // N x d
  DecodeTrace<Scalar> trace;
};

/// Decodes `steps` logits from X, evaluates `objective` on them and returns
/// its gradient with respect to X using one reverse pass.
template <typename Scalar, typename Objective>
InputGradient<Scalar> input_gradient(const MatrixX<Scalar>& X, const ModelParamsT<Scalar>& params, int steps,
                                     Objective&& objective, const TokenSequence* teacher = nullptr) {
  ForwardPass<Scalar> pass = forward(X, params, steps, teacher, true);
  LogitObjective<Scalar> obj = objective(pass.trace);
  InputGradient<Scalar> out;
  out.objective = obj.value;
  out.grad = backward(pass, params, obj.grad);
  out.trace = std::move(pass.trace);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation-time decoding

/// Greedy decoding truncated before the first <eos>; at most `max_len` tokens.
template <typename Scalar>
TokenSequence greedy_decode(const MatrixX<Scalar>& X, const ModelParamsT<Scalar>& params, int max_len) {
  if (max_len < 1) throw std::invalid_argument("greedy_decode: max_len must be >= 1");
  const auto enc = encode(X, params);
  auto state = decoder_start(enc.context);
  TokenSequence out;
  int prev = kBos;
  for (int t = 0; t < max_len; ++t) {
    const int tok = argmax(decode_step(state, prev, enc.context, params));
    if (tok == kEos) break;
    out.push_back(tok);
    prev = tok;
  }
  return out;
}

/// Beam search by summed log-probability without length normalisation.
/// Hypotheses that emit <eos> or reach `max_len` tokens are complete; the
/// best-scoring complete hypothesis is returned without its <eos>.
template <typename Scalar>
TokenSequence beam_decode(const MatrixX<Scalar>& X, const ModelParamsT<Scalar>& params, int beam_width,
                          int max_len) {
  if (beam_width < 1) throw std::invalid_argument("beam_decode: beam_width must be >= 1");
  if (max_len < 1) throw std::invalid_argument("beam_decode: max_len must be >= 1");
  struct Hypothesis {
    TokenSequence tokens;
    Scalar score;
    LstmState<Scalar> state;
  };
  struct Candidate {
    Scalar score;
    std::size_t parent;
    int token;
  };
  const auto enc = encode(X, params);
  std::vector<Hypothesis> beam{{{}, Scalar(0), decoder_start(enc.context)}};
  std::optional<Hypothesis> best;
  auto offer = [&](Hypothesis h) {
    if (!best || h.score > best->score) best = std::move(h);
  };

  for (int t = 0; t < max_len && !beam.empty(); ++t) {
    std::vector<Candidate> candidates;
    std::vector<LstmState<Scalar>> next_states;
    next_states.reserve(beam.size());
    for (std::size_t b = 0; b < beam.size(); ++b) {
      auto state = beam[b].state;
      const int prev = beam[b].tokens.empty() ? kBos : beam[b].tokens.back();
      const VectorX<Scalar> logp = log_softmax(decode_step(state, prev, enc.context, params));
      for (Eigen::Index y = 0; y < logp.size(); ++y) {
        candidates.push_back({beam[b].score + logp(y), b, static_cast<int>(y)});
      }
      next_states.push_back(std::move(state));
    }
    // Stable order: score, then parent rank, then token index.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    std::vector<Hypothesis> next;
    for (const auto& cand : candidates) {
      if (static_cast<int>(next.size()) >= beam_width) break;
      // A finished hypothesis cannot be beaten by anything ranked below it.
      if (best && cand.score <= best->score) break;
      Hypothesis h{beam[cand.parent].tokens, cand.score, next_states[cand.parent]};
      if (cand.token == kEos) {
        offer(std::move(h));
        continue;
      }
      h.tokens.push_back(cand.token);
      if (t + 1 == max_len) {
        offer(std::move(h));
      } else {
        next.push_back(std::move(h));
      }
    }
    beam = std::move(next);
  }
  return best ? best->tokens : TokenSequence{};
}

// ---------------------------------------------------------------------------

using EmbeddingTable = EmbeddingTableT<double>;
using LstmWeights = LstmWeightsT<double>;
using ModelParams = ModelParamsT<double>;
using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

}  // namespace seq2sick
