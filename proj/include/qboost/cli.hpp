#pragma once

namespace qboost {

// Entry point behind the qboost binary. Returns 0 on success; on failure
// prints a single "error: ..." line to stderr and returns 1.
int run_cli(int argc, const char* const* argv);

}  // namespace qboost
