#pragma once

#include <ostream>

namespace m2s {

/// Runs one subcommand: train, eval, predict, score-difficulty, gen-synthetic
/// or count-params. Returns 0 on success, 1 on usage or validation errors and
/// 2 on runtime failures.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Applies M2S_NUM_THREADS, if set, to the kernel thread cap.
void apply_thread_env();

}  // namespace m2s
