#pragma once

namespace ionaddr::cli {

/// Full command-line entry point; returns the process exit status
/// (0 success, 1 computation error, 2 configuration or usage error).
int run(int argc, char** argv);

}  // namespace ionaddr::cli
