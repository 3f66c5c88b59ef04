#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "seq2sick/config.hpp"

namespace seq2sick::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kDiverged = 3,
  kBadConfig = 4,
};

/// Writes the training/test TSVs and both vocabulary files.
int cmd_gen_task(const KeyValueConfig& config, std::ostream& log);
/// Trains, writes the checkpoint and its `.meta` sidecar (attack readiness).
int cmd_train(const KeyValueConfig& config, std::ostream& log);
/// Attacks every input line and writes the report CSV.
int cmd_attack(const KeyValueConfig& config, std::ostream& log);
/// Random-substitution control with per-sample budgets.
int cmd_baseline(const KeyValueConfig& config, std::ostream& log);

/// Accepted keys per command.
const std::vector<std::string>& known_keys(const std::string& command);

/// Full command-line entry point; returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace seq2sick::cli
