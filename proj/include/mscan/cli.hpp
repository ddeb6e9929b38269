#pragma once

namespace mscan {

// Entry point for the `mscan` binary. Exit codes: 0 success, 1 usage error,
// 2 data error, 3 pipeline error.
int run_cli(int argc, char** argv);

}  // namespace mscan
