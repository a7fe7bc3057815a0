#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace milcnn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one command line (without the program name). Machine-readable JSON
/// goes to `out`, human summaries and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace milcnn::cli
