#pragma once

#include <cstdint>
#include <optional>
#include <ostream>

namespace crt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitArgument = 2;
inline constexpr int kExitValidation = 3;
inline constexpr int kExitNumeric = 4;

// Entry point for `crt <command> [flags]`. Errors are reported on `err` and
// mapped to exit codes; nothing is thrown.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Flag value, else CRT_SEED, else 0. A malformed CRT_SEED is an argument
// error.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag);

}  // namespace crt::cli
