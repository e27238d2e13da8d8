#pragma once

#include <iosfwd>

namespace medbot::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

// Entry point of the `medbot` binary. `in` feeds the chat subcommand.
int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace medbot::cli
