#include <doctest.h>

#include <cmath>
#include <functional>

#include "seq2sick/model.hpp"
#include "test_support.hpp"

using namespace seq2sick;
using seq2sick::testing::random_matrix;
using seq2sick::testing::random_model;
using seq2sick::testing::random_vector;

TEST_CASE("embed looks up table rows") {
  SUBCASE("zero row") {
    const Matrix table = Matrix::Zero(1, 2);
    const Matrix X = embed(TokenSequence{0}, table);
    CHECK(X.rows() == 1);
    CHECK(X.isZero(0.0));
  }
  SUBCASE("permutation of lookup") {
    Matrix table(3, 2);
    table << 1, 2, 3, 4, 5, 6;
    const Matrix X = embed(TokenSequence{2, 1}, table);
    CHECK(X.row(0) == table.row(2));
    CHECK(X.row(1) == table.row(1));
  }
  SUBCASE("nearest-row scan recovers the sequence") {
    Rng rng(3);
    const Matrix table = random_matrix(rng, 20, 5);
    const TokenSequence seq{4, 19, 0, 7, 7, 12};
    const Matrix X = embed(seq, table);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const auto nn = seq2sick::testing::brute_force_nearest(table, X.row(i).transpose(), {});
      CHECK(nn.first == seq[static_cast<std::size_t>(i)]);
      CHECK(nn.second == 0.0);
    }
  }
  SUBCASE("out-of-range index is an input error") {
    const Matrix table = Matrix::Zero(3, 2);
    CHECK_THROWS_AS(embed(TokenSequence{3}, table), InputError);
    CHECK_THROWS_AS(embed(TokenSequence{-1}, table), InputError);
  }
}

TEST_CASE("lstm_cell") {
  SUBCASE("zero weights give zero state") {
    const auto w = LstmWeights::zeros(3, 4);
    Rng rng(1);
    const auto out = lstm_cell<double>(random_vector(rng, 3), random_vector(rng, 4), Vector::Zero(4), w);
    CHECK(out.h.isZero(0.0));
    CHECK(out.c.isZero(0.0));
  }
  SUBCASE("saturated forget gate carries the cell state") {
    auto w = LstmWeights::zeros(3, 4);
    w.bias.segment(4, 4).setConstant(50.0);
    Rng rng(2);
    const Vector c_prev = random_vector(rng, 4);
    const auto out = lstm_cell<double>(random_vector(rng, 3), Vector::Zero(4), c_prev, w);
    CHECK((out.c - c_prev).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("matches a scalar gate-by-gate evaluation") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      LstmWeights w{random_matrix(rng, 20, 3, 0.3), random_matrix(rng, 20, 5, 0.3), random_vector(rng, 20, 0.3)};
      const Vector x = random_vector(rng, 3), h = random_vector(rng, 5), c = random_vector(rng, 5);
      const auto out = lstm_cell<double>(x, h, c, w);
      const auto ref = seq2sick::testing::scalar_lstm_cell(seq2sick::testing::to_std(x), seq2sick::testing::to_std(h),
                                                           seq2sick::testing::to_std(c), w);
      for (int k = 0; k < 5; ++k) {
        CHECK(out.h(k) == doctest::Approx(ref.h[static_cast<std::size_t>(k)]).epsilon(1e-12));
        CHECK(out.c(k) == doctest::Approx(ref.c[static_cast<std::size_t>(k)]).epsilon(1e-12));
      }
    }
  }
  SUBCASE("dimension mismatch throws") {
    const auto w = LstmWeights::zeros(3, 4);
    CHECK_THROWS(lstm_cell<double>(Vector::Zero(2), Vector::Zero(4), Vector::Zero(4), w));
  }
}

TEST_CASE("encode") {
  SUBCASE("single step with zero weights") {
    const auto p = ModelParams::zeros(3, 4, 6, 6);
    const auto state = encode<double>(Matrix::Ones(1, 3), p);
    CHECK(state.context.isZero(0.0));
  }
  SUBCASE("context is the last hidden state and encoding is deterministic") {
    const auto p = random_model(9, 4, 5, 10, 10);
    Rng rng(4);
    const Matrix X = random_matrix(rng, 6, 4);
    const auto a = encode(X, p), b = encode(X, p);
    CHECK(a.context == a.hidden.back());
    CHECK(a.context == b.context);
    CHECK(a.hidden.size() == 6);
  }
  SUBCASE("three steps equal three folded cell calls") {
    const auto p = random_model(10, 4, 5, 10, 10);
    Rng rng(8);
    const Matrix X = random_matrix(rng, 3, 4);
    Vector h = Vector::Zero(5), c = Vector::Zero(5);
    for (int t = 0; t < 3; ++t) {
      auto s = lstm_cell<double>(X.row(t).transpose(), h, c, p.encoder);
      h = s.h;
      c = s.c;
    }
    CHECK(encode(X, p).context == h);
  }
  SUBCASE("empty input is rejected") {
    const auto p = ModelParams::zeros(3, 4, 6, 6);
    CHECK_THROWS_AS(encode<double>(Matrix(0, 3), p), InputError);
  }
}

namespace {

/// Model whose output bias makes `token` the argmax at every step.
ModelParams constant_argmax_model(int token, int vocab = 10) {
  auto p = random_model(21, 4, 5, vocab, vocab, 0.1);
  p.output.setZero();
  p.output_bias.setZero();
  p.output_bias(token) = 3.0;
  return p;
}

}  // namespace

TEST_CASE("decode_logits") {
  SUBCASE("constant argmax") {
    const auto p = constant_argmax_model(5);
    const auto trace = decode_logits<double>(Matrix::Ones(3, 4), p, 6);
    CHECK(trace.tokens == TokenSequence(6, 5));
    CHECK(trace.logits.size() == 6);
  }
  SUBCASE("softmax of equal logits is uniform") {
    const Vector p = softmax(Vector::Zero(2));
    CHECK(p(0) == 0.5);
    CHECK(p(1) == 0.5);
  }
  SUBCASE("first step equals a manual decode_step") {
    const auto p = random_model(30, 4, 5, 9, 11);
    Rng rng(2);
    const Matrix X = random_matrix(rng, 4, 4);
    const auto trace = decode_logits(X, p, 3);
    const auto enc = encode(X, p);
    auto state = decoder_start(enc.context);
    const Vector z1 = decode_step(state, kBos, enc.context, p);
    CHECK(trace.logits[0] == z1);
    // The next step feeds the emitted token.
    const Vector z2 = decode_step(state, argmax(z1), enc.context, p);
    CHECK(trace.logits[1] == z2);
  }
  SUBCASE("probabilities are positive, normalised, and argmax matches logits") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto p = random_model(seed, 4, 6, 9, 13, 2.0);
      Rng rng(seed + 100);
      const auto trace = decode_logits(random_matrix(rng, 3, 4), p, 5);
      for (std::size_t t = 0; t < 5; ++t) {
        CHECK(std::abs(trace.probs[t].sum() - 1.0) < 1e-9);
        CHECK(trace.probs[t].minCoeff() > 0.0);
        CHECK(trace.tokens[t] == argmax(trace.logits[t]));
      }
    }
  }
  SUBCASE("teacher forcing feeds the given tokens") {
    const auto p = random_model(31, 4, 5, 9, 11);
    Rng rng(3);
    const Matrix X = random_matrix(rng, 4, 4);
    const TokenSequence teacher{7, 8, 9};
    const auto pass = forward(X, p, 3, &teacher);
    CHECK(pass.fed_tokens == TokenSequence{kBos, 7, 8});
  }
  SUBCASE("argmax ties go to the lowest index") {
    Vector z(4);
    z << 1.0, 3.0, 3.0, 2.0;
    CHECK(argmax(z) == 1);
    CHECK(argmax_excluding(z, 1) == 2);
  }
}

TEST_CASE("greedy_decode") {
  SUBCASE("eos first gives an empty output") {
    const auto p = constant_argmax_model(kEos);
    CHECK(greedy_decode<double>(Matrix::Ones(2, 4), p, 5).empty());
  }
  SUBCASE("constant argmax fills max_len") {
    const auto p = constant_argmax_model(6);
    CHECK(greedy_decode<double>(Matrix::Ones(2, 4), p, 4) == TokenSequence(4, 6));
  }
  SUBCASE("agrees with decode_logits truncated at eos") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      auto p = random_model(seed, 4, 6, 8, 7, 1.5);
      p.output_bias(kEos) += 0.5;  // make early stops common
      Rng rng(seed);
      const Matrix X = random_matrix(rng, 3, 4);
      const auto trace = decode_logits(X, p, 6);
      TokenSequence expected;
      for (int tok : trace.tokens) {
        if (tok == kEos) break;
        expected.push_back(tok);
      }
      CHECK(greedy_decode(X, p, 6) == expected);
    }
  }
}

namespace {

/// Exhaustive best sequence of length <= max_len under summed log-probability,
/// enumerating every token path explicitly.
TokenSequence exhaustive_best(const Matrix& X, const ModelParams& p, int max_len) {
  const auto enc = encode(X, p);
  TokenSequence best;
  double best_score = -std::numeric_limits<double>::infinity();
  std::function<void(LstmState<double>, int, TokenSequence, double)> walk = [&](LstmState<double> state, int prev,
                                                                              TokenSequence prefix, double score) {
    const Vector logp = log_softmax(decode_step(state, prev, enc.context, p));
    for (int y = 0; y < logp.size(); ++y) {
      const double s = score + logp(y);
      if (y == kEos) {
        if (s > best_score) best_score = s, best = prefix;
        continue;
      }
      TokenSequence next = prefix;
      next.push_back(y);
      if (static_cast<int>(next.size()) == max_len) {
        if (s > best_score) best_score = s, best = next;
      } else {
        walk(state, y, next, s);
      }
    }
  };
  walk(decoder_start(enc.context), kBos, {}, 0.0);
  return best;
}

}  // namespace

TEST_CASE("beam_decode") {
  SUBCASE("width 1 equals greedy on 50 random models") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      auto p = random_model(seed + 500, 4, 6, 8, 9, 1.5);
      p.output_bias(kEos) += 0.3;
      Rng rng(seed);
      const Matrix X = random_matrix(rng, 1 + static_cast<int>(seed % 4), 4);
      CHECK(beam_decode(X, p, 1, 6) == greedy_decode(X, p, 6));
    }
  }
  SUBCASE("width 5 on a 4-token vocabulary equals exhaustive search over length-2 outputs") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const auto p = random_model(seed + 900, 3, 4, 6, 4, 2.0);
      Rng rng(seed);
      const Matrix X = random_matrix(rng, 2, 3);
      CHECK(beam_decode(X, p, 5, 2) == exhaustive_best(X, p, 2));
    }
  }
  SUBCASE("wide beam equals exhaustive search over length-3 outputs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = random_model(seed + 1300, 3, 4, 6, 5, 2.0);
      Rng rng(seed);
      const Matrix X = random_matrix(rng, 2, 3);
      CHECK(beam_decode(X, p, 25, 3) == exhaustive_best(X, p, 3));
    }
  }
  SUBCASE("deterministic") {
    const auto p = random_model(77, 4, 6, 8, 9, 1.5);
    Rng rng(1);
    const Matrix X = random_matrix(rng, 4, 4);
    CHECK(beam_decode(X, p, 5, 6) == beam_decode(X, p, 5, 6));
  }
  SUBCASE("rejects a zero beam") {
    const auto p = random_model(78, 4, 6, 8, 9);
    CHECK_THROWS(beam_decode<double>(Matrix::Ones(2, 4), p, 0, 4));
  }
}

TEST_CASE("input_gradient matches central differences") {
  // d=8, hidden=8, N=4, M=4, |vocab|=12 with a smooth objective sum_t w_t . z_t.
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_model(seed + 40, 8, 8, 12, 12, 0.6);
    Rng rng(seed + 7);
    const Matrix X = random_matrix(rng, 4, 8);
    std::vector<Vector> weights;
    for (int t = 0; t < 4; ++t) weights.push_back(random_vector(rng, 12));
    auto objective = [&](const DecodeTrace<double>& trace) {
      LogitObjective<double> obj;
      for (std::size_t t = 0; t < trace.logits.size(); ++t) obj.value += weights[t].dot(trace.logits[t]);
      obj.grad = weights;
      return obj;
    };
    const auto analytic = input_gradient(X, p, 4, objective);
    const double h = 1e-4;
    Matrix fd(4, 8);
    bool kink = false;
    for (Eigen::Index i = 0; i < 4; ++i) {
      for (Eigen::Index j = 0; j < 8; ++j) {
        Matrix Xp = X, Xm = X;
        Xp(i, j) += h;
        Xm(i, j) -= h;
        const auto tp = decode_logits(Xp, p, 4), tm = decode_logits(Xm, p, 4);
        kink |= tp.tokens != analytic.trace.tokens || tm.tokens != analytic.trace.tokens;
        fd(i, j) = (objective(tp).value - objective(tm).value) / (2 * h);
      }
    }
    if (kink) continue;
    ++checked;
    const double rel = (analytic.grad - fd).norm() / std::max(analytic.grad.norm(), fd.norm());
    CHECK(rel < 1e-4);
  }
  CHECK(checked >= 15);
}

TEST_CASE("parameter validation") {
  auto p = ModelParams::zeros(3, 4, 6, 7);
  CHECK_NOTHROW(p.validate());
  p.output_bias.resize(3);
  CHECK_THROWS_AS(p.validate(), InputError);
  CHECK_THROWS(ModelParams::zeros(0, 4, 6, 7));
}
