#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xferlens {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitPartialFailure = 3;
inline constexpr int kExitInvalidMethod = 4;

/// Runs the command line `args` (without the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& data);

}  // namespace xferlens
