#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace specrisk {

// Experiment driver behind the spectral-risk binary. `args` is the argv tail
// (no program name): subcommand first, then flags. Returns the process exit
// code: 0 on success, 1 on a usage or validation error (nothing is written),
// 2 on a numerical failure mid-pipeline (the failing stage is named on `err`).
//
// Subcommands: stieltjes, descent, mp-verify, assumptions. Each reads a JSON
// config (--config, else built-in defaults), overridable field by field with
// repeated `--set dotted.path=value`, and the dedicated `--seed`, `--out`,
// `--threads`, `--plot` flags. The environment variable SPECTRAL_RISK_SEED
// replaces the built-in default seed (config and flags still win). Every run
// writes `config.resolved.json` beside its outputs.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace specrisk
