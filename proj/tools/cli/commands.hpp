#pragma once

namespace mscate::cli {

// Full command-line entry point. Returns the process exit status:
// 0 success, 1 usage or config error, 2 data error, 3 numerical error.
int run(int argc, const char* const* argv);

}  // namespace mscate::cli
