#pragma once

namespace sfc {

// Entry point behind the `sfc` binary. Exit codes: 0 success, 1 runtime
// failure, 2 usage error.
int dispatch(int argc, char** argv);

}  // namespace sfc
