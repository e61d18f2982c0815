#pragma once

namespace lkmrl {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
int cli_main(int argc, char** argv);

}  // namespace lkmrl
