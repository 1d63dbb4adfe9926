#pragma once

#include <string>
#include <vector>

namespace ordseq {

// Full command-line entry point (subcommands: prepare, split, augment, cv,
// train, predict, eval, report). Returns the process exit code: 0 iff no
// error. The vector overload exists for in-process tests.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace ordseq
