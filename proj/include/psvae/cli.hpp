#pragma once

namespace psvae {

// Entry point behind the CLI binary. Exit codes: 0 success, 1 usage error,
// 2 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace psvae
