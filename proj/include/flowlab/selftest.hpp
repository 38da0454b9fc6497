#ifndef FLOWLAB_SELFTEST_HPP
#define FLOWLAB_SELFTEST_HPP

#include "flowlab/linear_theory.hpp"

#include <functional>
#include <string>
#include <vector>

namespace flowlab {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Injection points for mutation testing: the checks call these instead of
/// the library functions directly.
struct SelftestHooks {
    std::function<theory::SpectralPair<double>(double, double)> q_eigen = theory::q_eigen<double>;
};

/// Fast subset of the acceptance suite: closed-form identities, gradient
/// checks and a 1e5-sample Monte-Carlo comparison at tolerance 2e-2.
std::vector<CheckResult> run_selftest(const SelftestHooks& hooks = {}, unsigned threads = 1);

}  // namespace flowlab

#endif  // FLOWLAB_SELFTEST_HPP
