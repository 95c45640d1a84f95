#pragma once

#include <string>
#include <vector>

namespace udap {

/// Operator entry point. argv follows `udap <subcommand> [flags]` with
/// subcommands gen-data, train-ae, train-denoiser, attack, calibrate,
/// purify, recon-gap, eval, sweep-tau. Flags override --config file values,
/// which override defaults; UDAP_SEED supplies the seed when neither does.
/// Every run writes summary.json echoing the fully resolved config under
/// --out. Failures print one line of error JSON to stderr and return
/// nonzero: 2 config/usage, 3 missing dependency, 4 storage, 1 internal.
int run_cli(int argc, const char* const* argv);

/// Convenience wrapper used by tests: args without the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace udap
