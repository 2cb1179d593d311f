#pragma once

namespace migrasim {

// Entry point behind the `migrasim` binary. Exit codes: 0 success,
// 2 invalid input (usage, schema, or reference errors), 3 correctness
// failure (migrated outputs diverge from the baseline), 1 unexpected error.
int run_cli(int argc, const char* const* argv);

} // namespace migrasim
