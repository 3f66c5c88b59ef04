#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "seq2sick/checkpoint.hpp"
#include "seq2sick/cli.hpp"
#include "seq2sick/corpus.hpp"
#include "seq2sick/errors.hpp"
#include "seq2sick/evaluation.hpp"
#include "seq2sick/experiment.hpp"
#include "test_support.hpp"

using namespace seq2sick;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("seq2sick_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "seq2sick");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("KeyValueConfig") {
  const auto c = KeyValueConfig::parse("# comment\nseed = 7\nkeywords=a, b c\nflag=true\nseed=8\n");
  CHECK(c.get_int("seed", 0) == 8);
  CHECK(c.get_list("keywords") == std::vector<std::string>{"a", "b", "c"});
  CHECK(c.get_bool("flag", false));
  CHECK(c.get_double("missing", 1.5) == 1.5);
  CHECK_THROWS_AS(c.require("missing"), ConfigError);
  CHECK_THROWS_AS(c.reject_unknown({"seed"}), ConfigError);
  CHECK_NOTHROW(c.reject_unknown({"seed", "keywords", "flag"}));
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("seed=abc\n").get_int("seed", 0), ConfigError);
  CHECK(c.dump() == "flag=true\nkeywords=a, b c\nseed=8\n");
}

TEST_CASE("gen-task") {
  TempDir dir("gen");
  SUBCASE("writes the requested number of lines") {
    CHECK(run_cli({"gen-task", "--set", "kind=copy", "--set", "n_pairs=100", "--set", "out=" + (dir / "a.tsv")}) == 0);
    CHECK(count_lines(slurp(dir / "a.tsv")) == 100);
    CHECK(fs::exists(dir / "a.tsv.src.vocab"));
  }
  SUBCASE("same seed gives identical bytes and the files reload") {
    for (const char* name : {"a.tsv", "b.tsv"}) {
      CHECK(run_cli({"gen-task", "--set", "kind=translation", "--set", "n_pairs=50", "--seed", "4", "--set",
                     std::string("out=") + (dir / name)}) == 0);
    }
    CHECK(slurp(dir / "a.tsv") == slurp(dir / "b.tsv"));
    CHECK(slurp(dir / "a.tsv.tgt.vocab") == slurp(dir / "b.tsv.tgt.vocab"));
    const auto src = load_vocabulary(dir / "a.tsv.src.vocab"), tgt = load_vocabulary(dir / "a.tsv.tgt.vocab");
    const Corpus loaded = load_corpus(dir / "a.tsv", src, tgt);
    TaskSpec spec;
    spec.kind = TaskKind::kTranslation;
    spec.n_pairs = 50;
    spec.max_len = 4;
    spec.seed = 4;
    const Corpus expected = generate_task(spec);
    CHECK(loaded.pairs == expected.pairs);
    CHECK(loaded.source_vocab == expected.source_vocab);
    CHECK(loaded.unknown_tokens == 0);
  }
  SUBCASE("unwritable path is an I/O error") {
    CHECK(run_cli({"gen-task", "--set", "out=/nonexistent/dir/x.tsv"}) == cli::kIo);
  }
  SUBCASE("unknown keys are rejected") {
    std::string err;
    CHECK(run_cli({"gen-task", "--set", "out=" + (dir / "a.tsv"), "--set", "colour=red"}, nullptr, &err) ==
          cli::kBadConfig);
    CHECK(err.find("colour") != std::string::npos);
  }
  SUBCASE("config file with flag override") {
    std::ofstream(dir / "gen.cfg") << "kind=copy\nn_pairs=30\nseed=1\nout=" << (dir / "c.tsv") << "\n";
    std::string out;
    CHECK(run_cli({"gen-task", "--config", dir / "gen.cfg", "--seed", "2"}, &out) == 0);
    CHECK(out.find("seed=2") != std::string::npos);
    CHECK(count_lines(slurp(dir / "c.tsv")) == 30);
    CHECK(run_cli({"gen-task", "--config", dir / "missing.cfg"}) == cli::kIo);
  }
}

namespace {

/// Small copy-task fixture: corpus, held-out set, and trained checkpoint.
struct Pipeline {
  TempDir dir{"pipe"};
  std::string train = dir / "train.tsv", test = dir / "test.tsv", ckpt = dir / "model.ckpt";

  void generate(int vocab, int n_pairs) {
    REQUIRE(run_cli({"gen-task", "--set", "kind=copy", "--set", "vocab_size=" + std::to_string(vocab), "--set",
                     "n_pairs=" + std::to_string(n_pairs), "--set", "n_test=50", "--set", "out=" + train, "--set",
                     "test_out=" + test}) == 0);
  }
  std::vector<std::string> vocab_args() const {
    return {"--set", "src_vocab=" + train + ".src.vocab", "--set", "tgt_vocab=" + train + ".tgt.vocab"};
  }
  int train_model(std::vector<std::string> extra, std::string* out = nullptr) const {
    std::vector<std::string> args{"train", "--set", "train=" + train, "--set", "test=" + test, "--set",
                                  "checkpoint=" + ckpt};
    for (auto& a : vocab_args()) args.push_back(a);
    for (auto& a : extra) args.push_back(a);
    return run_cli(args, out);
  }
  int attack(const std::string& command, std::vector<std::string> extra, std::string* err = nullptr) const {
    std::vector<std::string> args{command, "--set", "checkpoint=" + ckpt, "--set", "inputs=" + test, "--set",
                                  "limit=10", "--set", "allow_unready=true"};
    for (auto& a : vocab_args()) args.push_back(a);
    for (auto& a : extra) args.push_back(a);
    return run_cli(args, nullptr, err);
  }
};

}  // namespace

TEST_CASE("train") {
  Pipeline p;
  p.generate(12, 200);
  SUBCASE("zero epochs is not attack-ready") {
    CHECK(p.train_model({"--set", "epochs=0"}) == 0);
    CHECK(slurp(p.ckpt + ".meta").find("attack_ready=0") != std::string::npos);
    CHECK(p.attack("attack", {"--set", "allow_unready=false", "--set", "report=" + (p.dir / "r.csv")}) ==
          cli::kBadConfig);
  }
  SUBCASE("rerun gives identical checkpoint bytes") {
    CHECK(p.train_model({"--set", "epochs=2", "--seed", "5"}) == 0);
    const std::string first = slurp(p.ckpt);
    CHECK(p.train_model({"--set", "epochs=2", "--seed", "5"}) == 0);
    CHECK(slurp(p.ckpt) == first);
    CHECK(deserialize_checkpoint(std::vector<unsigned char>(first.begin(), first.end())).hidden() == 64);
  }
  SUBCASE("divergence exits with code 3") {
    CHECK(p.train_model({"--set", "epochs=3", "--set", "optimizer=sgd", "--lr", "1e300"}) == cli::kDiverged);
  }
}

TEST_CASE("attack and baseline commands") {
  Pipeline p;
  p.generate(12, 200);
  REQUIRE(p.train_model({"--set", "epochs=3", "--set", "hidden=16", "--set", "dim=8"}) == 0);
  const std::string report = p.dir / "r.csv";
  SUBCASE("non-overlap batch of 10 gives 11 rows") {
    CHECK(p.attack("attack", {"--set", "report=" + report, "--iters", "20"}) == 0);
    const std::string csv = slurp(report);
    CHECK(count_lines(csv) == 12);  // header + 10 + ALL
    CHECK(read_report_rows(report).size() == 10);
  }
  SUBCASE("huge group lasso weight changes nothing") {
    CHECK(p.attack("attack", {"--set", "report=" + report, "--lambda1", "1e6", "--iters", "10"}) == 0);
    for (const auto& r : read_report_rows(report)) CHECK(r.changed == 0);
  }
  SUBCASE("keyword not in vocabulary exits 4 and names it") {
    std::string err;
    CHECK(p.attack("attack", {"--set", "report=" + report, "--mode", "keywords", "--keywords", "w5,zebra,the"},
                   &err) == cli::kBadConfig);
    CHECK(err.find("zebra") != std::string::npos);
  }
  SUBCASE("reruns are byte-identical, also across worker counts") {
    CHECK(p.attack("attack", {"--set", "report=" + report, "--mode", "keywords", "--iters", "20"}) == 0);
    const std::string first = slurp(report);
    CHECK(p.attack("attack",
                   {"--set", "report=" + report, "--mode", "keywords", "--iters", "20", "--set", "workers=3"}) == 0);
    CHECK(slurp(report) == first);
  }
  SUBCASE("baseline with budget 0 keeps inputs") {
    CHECK(p.attack("baseline", {"--set", "report=" + report, "--mode", "keywords", "--set", "budget=0"}) == 0);
    for (const auto& r : read_report_rows(report)) {
      CHECK(r.changed == 0);
      CHECK(r.bleu == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("baseline reads budgets from an attack report and is deterministic") {
    CHECK(p.attack("attack", {"--set", "report=" + report, "--iters", "20"}) == 0);
    const std::string base = p.dir / "b.csv";
    CHECK(p.attack("baseline", {"--set", "report=" + base, "--set", "budget_report=" + report}) == 0);
    const auto a = read_report_rows(report), b = read_report_rows(base);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i].changed == a[i].changed);
    const std::string first = slurp(base);
    CHECK(p.attack("baseline", {"--set", "report=" + base, "--set", "budget_report=" + report}) == 0);
    CHECK(slurp(base) == first);
  }
}

TEST_CASE("baseline never beats exhaustive single substitution") {
  // N = 3, vocab 10: with budget 1, a baseline success implies some single
  // substitution succeeds.
  int baseline_successes = 0, exhaustive_successes = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto params = seq2sick::testing::random_model(seed + 300, 4, 8, 10, 10, 1.0);
    params.output_bias(kEos) = -5.0;
    AttackConfig cfg;
    cfg.mode = AttackMode::kKeywords;
    cfg.keywords = {static_cast<int>(4 + seed % 6)};
    const TokenSequence input{4 + static_cast<int>(seed % 3), 7, 9};
    const auto base = random_substitution_attack(params, input, cfg, 1, 10, seed);
    bool exhaustive = false;
    for (std::size_t pos = 0; pos < 3; ++pos) {
      for (int tok = kNumReserved; tok < 10; ++tok) {
        TokenSequence cand = input;
        cand[pos] = tok;
        const auto out = decode_for_attack(params, embed(cand, params.src_embedding), 3, 1);
        exhaustive |= is_keyword_success(out, cfg.keywords);
      }
    }
    baseline_successes += base.success;
    exhaustive_successes += exhaustive;
    if (base.success) CHECK(exhaustive);
    CHECK(base.changed_words <= 1);
  }
  CHECK(baseline_successes <= exhaustive_successes);
}

TEST_CASE("default copy model passes the quality gate" * doctest::timeout(300)) {
  Pipeline p;
  p.generate(20, 2000);
  std::string out;
  CHECK(p.train_model({}, &out) == 0);
  CHECK(slurp(p.ckpt + ".meta").find("attack_ready=1") != std::string::npos);
  INFO(out);
}

TEST_CASE("usage errors") {
  CHECK(run_cli({}) != 0);
  CHECK(run_cli({"nonsense"}) != 0);
}
