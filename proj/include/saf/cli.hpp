#pragma once

namespace saf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // validation, config or usage errors
inline constexpr int kExitIo = 2;       // unreadable/unwritable files, malformed file contents

// Runs one subcommand: synth, preprocess, train, grid, eval, analyze.
int dispatch(int argc, const char* const* argv);

}  // namespace saf::cli
