#ifndef FLOWLAB_CLI_HPP
#define FLOWLAB_CLI_HPP

#include "flowlab/errors.hpp"
#include "flowlab/selftest.hpp"

#include <iosfwd>
#include <vector>

namespace flowlab::cli {

enum ExitCode : int {
    kOk = 0,
    kInputError = 2,
    kDegenerateWeights = 3,
    kVerificationFailed = 4,
    kDivergence = 5,
};

int exit_code_for(Errc code) noexcept;

/// Entire command line; argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<const char*>& args, std::ostream& out, std::ostream& err);

/// Prints one line per check; kVerificationFailed when any check fails.
int selftest(const SelftestHooks& hooks, unsigned threads, std::ostream& out);

}  // namespace flowlab::cli

#endif  // FLOWLAB_CLI_HPP
