#include "seq2sick/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "seq2sick/checkpoint.hpp"
#include "seq2sick/corpus.hpp"
#include "seq2sick/errors.hpp"
#include "seq2sick/experiment.hpp"
#include "seq2sick/trainer.hpp"

#ifndef SEQ2SICK_DEFAULT_STOPWORDS
#define SEQ2SICK_DEFAULT_STOPWORDS ""
#endif

namespace seq2sick::cli {

namespace {

const std::vector<std::string> kGenKeys = {"kind",    "n_pairs", "n_test",   "vocab_size", "min_len", "max_len",
                                           "seed",    "out",     "test_out", "src_vocab",  "tgt_vocab"};
const std::vector<std::string> kTrainKeys = {"train", "test",   "src_vocab", "tgt_vocab", "checkpoint",
                                             "optimizer", "epochs", "lr",   "batch",     "hidden",
                                             "dim",   "seed",   "clip",      "clip_norm", "gate"};
const std::vector<std::string> kAttackKeys = {
    "checkpoint", "src_vocab", "tgt_vocab", "inputs",          "report",          "mode",
    "keywords",   "num_keywords", "stopwords", "eps",          "lambda1",         "lambda2",
    "lr",         "iters",     "seed",      "beam",            "projection",      "teacher_forcing",
    "limit",      "workers",   "success_only", "adversarial_out", "allow_unready", "iters_after_success"};
const std::vector<std::string> kBaselineKeys = [] {
  auto keys = kAttackKeys;
  keys.insert(keys.end(), {"budget_report", "budget", "restarts"});
  return keys;
}();

std::string meta_path(const std::string& checkpoint) { return checkpoint + ".meta"; }

std::string vocab_path(const KeyValueConfig& config, const std::string& key, const std::string& base,
                       const std::string& suffix) {
  return config.get_string(key, base + suffix);
}

void announce(const std::string& command, const KeyValueConfig& config, std::ostream& log) {
  log << "# " << command << " effective config\n" << config.dump();
}

// ---------------------------------------------------------------------------
// Shared attack/baseline setup

struct AttackSetup {
  ModelParams params;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  std::vector<TokenSequence> inputs;
  AttackConfig attack;
  KeywordPlan plan;
  int workers = 1;
};

std::set<int> load_stopwords(const KeyValueConfig& config, const Vocabulary& target_vocab,
                             std::set<std::string>& words) {
  std::string path = config.get_string("stopwords", SEQ2SICK_DEFAULT_STOPWORDS);
  std::set<int> banned;
  if (path.empty()) return banned;
  if (!config.has("stopwords") && !std::filesystem::exists(path)) return banned;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stop-word file " + path);
  std::string word;
  while (in >> word) {
    words.insert(word);
    const int idx = target_vocab.find(word);
    if (idx >= 0) banned.insert(idx);
  }
  return banned;
}

AttackSetup load_setup(const KeyValueConfig& config, std::ostream& log) {
  AttackSetup setup;
  const std::string checkpoint = config.require("checkpoint");
  setup.params = load_checkpoint(checkpoint);
  setup.params.validate();
  if (!config.get_bool("allow_unready", false)) {
    const auto meta_file = meta_path(checkpoint);
    const bool ready = std::filesystem::exists(meta_file) &&
                       KeyValueConfig::load(meta_file).get_bool("attack_ready", false);
    if (!ready) {
      throw ConfigError("checkpoint " + checkpoint +
                        " is not attack-ready (held-out accuracy below the quality gate); set allow_unready=1 to "
                        "override");
    }
  }
  setup.source_vocab = load_vocabulary(config.require("src_vocab"));
  setup.target_vocab = load_vocabulary(config.require("tgt_vocab"));
  if (static_cast<Eigen::Index>(setup.source_vocab.size()) != setup.params.src_vocab_size() ||
      static_cast<Eigen::Index>(setup.target_vocab.size()) != setup.params.tgt_vocab_size()) {
    throw ConfigError("vocabulary sizes do not match the checkpoint");
  }
  setup.inputs = load_sources(config.require("inputs"), setup.source_vocab);
  const auto limit = config.get_int("limit", 0);
  if (limit > 0 && static_cast<std::size_t>(limit) < setup.inputs.size()) {
    setup.inputs.resize(static_cast<std::size_t>(limit));
  }

  AttackConfig& a = setup.attack;
  a.mode = parse_mode(config.get_string("mode", "nonoverlap"));
  a.epsilon = config.get_double("eps", a.epsilon);
  a.lambda1 = config.get_double("lambda1", a.lambda1);
  a.lambda2 = config.get_double("lambda2", a.lambda2);
  a.step_size = config.get_double("lr", a.step_size);
  a.max_iters = static_cast<int>(config.get_int("iters", a.max_iters));
  a.beam_width = static_cast<int>(config.get_int("beam", a.beam_width));
  a.teacher_forcing = config.get_bool("teacher_forcing", false);
  a.iters_after_success = static_cast<int>(config.get_int("iters_after_success", 0));
  const std::string projection = config.get_string("projection", "hybrid");
  if (projection == "hybrid") {
    a.projection = ProjectionMode::kHybrid;
  } else if (projection == "projected") {
    a.projection = ProjectionMode::kProjected;
  } else {
    throw ConfigError("unknown projection mode '" + projection + "' (expected hybrid or projected)");
  }

  std::set<std::string> stopword_strings;
  setup.plan.banned = load_stopwords(config, setup.target_vocab, stopword_strings);
  setup.plan.seed = static_cast<std::uint64_t>(config.get_int("seed", 1));
  setup.plan.count = static_cast<std::size_t>(config.get_int("num_keywords", 1));
  if (a.mode == AttackMode::kKeywords) {
    std::vector<std::string> offenders;
    for (const auto& word : config.get_list("keywords")) {
      const int idx = setup.target_vocab.find(word);
      if (idx < 0 || is_reserved(idx) || stopword_strings.count(word)) {
        offenders.push_back(word);
      } else {
        setup.plan.fixed.push_back(idx);
      }
    }
    if (!offenders.empty()) {
      std::string list;
      for (const auto& w : offenders) list += (list.empty() ? "" : ", ") + w;
      throw ConfigError("keywords not usable with the target vocabulary: " + list);
    }
    if (setup.plan.fixed.empty() && setup.plan.count < 1) throw ConfigError("num_keywords must be >= 1");
  }
  // Sampled keywords are checked per sample; everything else is checked here.
  AttackConfig checked = a;
  checked.keywords = setup.plan.fixed;
  if (checked.keywords.empty()) checked.mode = AttackMode::kNonOverlapping;
  checked.validate(setup.target_vocab.size());
  setup.workers = static_cast<int>(config.get_int("workers", 1));
  log << "loaded " << setup.inputs.size() << " inputs\n";
  return setup;
}

void write_adversarial(const std::string& path, const AttackSetup& setup, const std::vector<AttackResult>& results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "id\toriginal\tadversarial\toriginal_output\tadversarial_output\tkeywords\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out << i << '\t' << setup.source_vocab.render(r.original) << '\t' << setup.source_vocab.render(r.adversarial)
        << '\t' << setup.target_vocab.render(r.original_output) << '\t'
        << setup.target_vocab.render(r.adversarial_output) << '\t' << setup.target_vocab.render(r.keywords) << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

void finish_report(const KeyValueConfig& config, const AttackSetup& setup, const std::vector<AttackResult>& results,
                   std::ostream& log) {
  const AttackReport report = make_report(setup.attack.mode, results, config.get_bool("success_only", false));
  write_report_csv(report, config.require("report"));
  if (config.has("adversarial_out")) write_adversarial(config.require("adversarial_out"), setup, results);
  const auto& agg = report.aggregate;
  log << std::fixed << std::setprecision(4) << "success% " << agg.success_percent << "  bleu " << agg.mean_bleu
      << "  changed " << agg.mean_changed << "  iters " << agg.mean_iters << '\n';
}

}  // namespace

const std::vector<std::string>& known_keys(const std::string& command) {
  if (command == "gen-task") return kGenKeys;
  if (command == "train") return kTrainKeys;
  if (command == "attack") return kAttackKeys;
  if (command == "baseline") return kBaselineKeys;
  throw ConfigError("unknown command " + command);
}

int cmd_gen_task(const KeyValueConfig& config, std::ostream& log) {
  config.reject_unknown(kGenKeys);
  announce("gen-task", config, log);
  TaskSpec spec;
  spec.kind = parse_task_kind(config.get_string("kind", "copy"));
  spec.vocab_size = static_cast<std::size_t>(config.get_int("vocab_size", 20));
  spec.min_len = static_cast<int>(config.get_int("min_len", 3));
  spec.max_len = static_cast<int>(config.get_int("max_len", 4));
  spec.seed = static_cast<std::uint64_t>(config.get_int("seed", 1));
  const auto n_pairs = config.get_int("n_pairs", 2000);
  const std::string out = config.require("out");
  const std::string test_out = config.get_string("test_out", "");
  const auto n_test = config.get_int("n_test", test_out.empty() ? 0 : 200);
  if (n_pairs < 1 || n_test < 0) throw ConfigError("n_pairs must be >= 1 and n_test >= 0");
  if (n_test > 0 && test_out.empty()) throw ConfigError("n_test > 0 needs test_out");
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  spec.n_pairs = static_cast<std::size_t>(n_pairs + n_test);

  Corpus all = generate_task(spec);
  Corpus train_part{{all.pairs.begin(), all.pairs.begin() + n_pairs}, all.source_vocab, all.target_vocab};
  save_corpus(train_part, out);
  if (n_test > 0) {
    Corpus test_part{{all.pairs.begin() + n_pairs, all.pairs.end()}, all.source_vocab, all.target_vocab};
    save_corpus(test_part, test_out);
  }
  save_vocabulary(all.source_vocab, vocab_path(config, "src_vocab", out, ".src.vocab"));
  save_vocabulary(all.target_vocab, vocab_path(config, "tgt_vocab", out, ".tgt.vocab"));
  log << "wrote " << n_pairs << " training pairs to " << out;
  if (n_test > 0) log << " and " << n_test << " held-out pairs to " << test_out;
  log << "; vocab sizes " << all.source_vocab.size() << '/' << all.target_vocab.size() << '\n';
  return kOk;
}

int cmd_train(const KeyValueConfig& config, std::ostream& log) {
  config.reject_unknown(kTrainKeys);
  announce("train", config, log);
  const std::string train_path = config.require("train");
  const auto src_vocab = load_vocabulary(vocab_path(config, "src_vocab", train_path, ".src.vocab"));
  const auto tgt_vocab = load_vocabulary(vocab_path(config, "tgt_vocab", train_path, ".tgt.vocab"));
  const Corpus corpus = load_corpus(train_path, src_vocab, tgt_vocab);
  if (corpus.unknown_tokens) log << "warning: " << corpus.unknown_tokens << " unknown tokens mapped to <unk>\n";

  TrainConfig tc;
  const std::string optimizer = config.get_string("optimizer", "adam");
  if (optimizer == "adam") {
    tc.optimizer = Optimizer::kAdam;
    tc.learning_rate = 0.01;
  } else if (optimizer == "sgd") {
    tc.optimizer = Optimizer::kSgd;
    tc.learning_rate = 0.5;
  } else {
    throw ConfigError("unknown optimizer '" + optimizer + "' (expected adam or sgd)");
  }
  tc.epochs = static_cast<int>(config.get_int("epochs", 40));
  tc.learning_rate = config.get_double("lr", tc.learning_rate);
  tc.batch_size = static_cast<int>(config.get_int("batch", tc.batch_size));
  tc.hidden = static_cast<int>(config.get_int("hidden", tc.hidden));
  tc.dim = static_cast<int>(config.get_int("dim", tc.dim));
  tc.seed = static_cast<std::uint64_t>(config.get_int("seed", 1));
  tc.clip = config.get_bool("clip", false);
  tc.clip_norm = config.get_double("clip_norm", tc.clip_norm);
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  log << std::fixed << std::setprecision(6);
  const TrainResult result =
      train(corpus, tc, [&](int epoch, double loss) { log << "epoch " << epoch << " loss " << loss << '\n'; });
  const std::string checkpoint = config.require("checkpoint");
  save_checkpoint(result.params, checkpoint);

  const double gate = config.get_double("gate", 0.95);
  std::string meta = "train_accuracy=";
  std::ostringstream acc;
  acc << std::setprecision(6) << std::fixed << sequence_accuracy(result.params, corpus);
  meta += acc.str() + "\n";
  bool ready = false;
  if (config.has("test")) {
    const Corpus test = load_corpus(config.require("test"), src_vocab, tgt_vocab);
    const double heldout = sequence_accuracy(result.params, test);
    ready = heldout >= gate;
    std::ostringstream h;
    h << std::setprecision(6) << std::fixed << heldout;
    meta += "heldout_accuracy=" + h.str() + "\n";
    log << "held-out sequence accuracy " << h.str() << " (gate " << gate << ")\n";
  } else {
    log << "no held-out set given; model is not marked attack-ready\n";
  }
  meta += std::string("attack_ready=") + (ready ? "1" : "0") + "\n";
  std::ofstream out(meta_path(checkpoint), std::ios::binary);
  if (!out || !(out << meta)) throw IoError("cannot write " + meta_path(checkpoint));
  log << "checkpoint " << checkpoint << (ready ? " is attack-ready\n" : " is NOT attack-ready\n");
  return kOk;
}

int cmd_attack(const KeyValueConfig& config, std::ostream& log) {
  config.reject_unknown(kAttackKeys);
  announce("attack", config, log);
  const AttackSetup setup = load_setup(config, log);
  const auto index = EmbeddingIndex::build(setup.params.src_embedding);
  const auto results = attack_batch(setup.params, setup.inputs, setup.attack, setup.plan, index, setup.workers);
  finish_report(config, setup, results, log);
  return kOk;
}

int cmd_baseline(const KeyValueConfig& config, std::ostream& log) {
  config.reject_unknown(kBaselineKeys);
  announce("baseline", config, log);
  const AttackSetup setup = load_setup(config, log);
  std::vector<int> budgets(setup.inputs.size(), static_cast<int>(config.get_int("budget", 0)));
  if (config.has("budget_report")) {
    const auto rows = read_report_rows(config.require("budget_report"));
    if (rows.size() < setup.inputs.size()) throw ConfigError("budget_report has fewer rows than inputs");
    for (std::size_t i = 0; i < budgets.size(); ++i) budgets[i] = rows[i].changed;
  }
  const int restarts = static_cast<int>(config.get_int("restarts", 10));
  const auto results = baseline_batch(setup.params, setup.inputs, setup.attack, setup.plan, budgets, restarts,
                                      setup.plan.seed, setup.workers);
  finish_report(config, setup, results, log);
  return kOk;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial attacks on LSTM seq2seq models via projected proximal gradient descent"};
  app.require_subcommand(1);

  struct Command {
    CLI::App* sub;
    std::string config_path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;
  };
  std::map<std::string, Command> commands;
  const std::vector<std::pair<std::string, std::string>> descriptions = {
      {"gen-task", "generate a synthetic corpus and vocabulary files"},
      {"train", "train a seq2seq model and write a checkpoint"},
      {"attack", "run the adversarial attack over input sentences"},
      {"baseline", "random-substitution control with matched budgets"}};
  const std::vector<std::pair<std::string, std::string>> overrides = {
      {"mode", "attack mode: nonoverlap | keywords"}, {"keywords", "comma-separated target keywords"},
      {"eps", "confidence margin"},                   {"lambda1", "group lasso weight"},
      {"lambda2", "gradient regularisation weight"},  {"lr", "learning rate / attack step size"},
      {"iters", "attack iterations"},                 {"seed", "random seed"},
      {"beam", "beam width for output decoding"}};
  for (const auto& [name, help] : descriptions) {
    Command& cmd = commands[name];
    cmd.sub = app.add_subcommand(name, help);
    cmd.sub->add_option("--config", cmd.config_path, "key=value config file");
    cmd.sub->add_option("--set", cmd.sets, "extra key=value override (repeatable)");
    for (const auto& [flag, flag_help] : overrides) {
      cmd.sub->add_option("--" + flag, cmd.flags[flag], flag_help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kBadConfig;
  }

  try {
    for (auto& [name, cmd] : commands) {
      if (!cmd.sub->parsed()) continue;
      KeyValueConfig config = cmd.config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(cmd.config_path);
      for (const auto& kv : cmd.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      for (const auto& [flag, value] : cmd.flags) {
        if (cmd.sub->count("--" + flag) > 0) config.set(flag, value);
      }
      if (name == "gen-task") return cmd_gen_task(config, out);
      if (name == "train") return cmd_train(config, out);
      if (name == "attack") return cmd_attack(config, out);
      return cmd_baseline(config, out);
    }
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kBadConfig;
  }
  return kBadConfig;
}

}  // namespace seq2sick::cli
