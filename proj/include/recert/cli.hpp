#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace recert {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitIo = 3 };

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick built-in checks: softmax/recurrence agreement, the log-denominator
/// invariant, a soundness fuzz against enumeration, and gradient checks of
/// the certified loss. Prints one line per check.
std::vector<SelftestCheck> run_selftest(std::ostream& out, std::uint64_t seed = 7);

/// Command-line entry point; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace recert
