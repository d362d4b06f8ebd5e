#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dimel::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `dimel` executable. Failures print exactly one line to
/// `err` of the form: error kind=<kind> message="<text>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace dimel::cli
