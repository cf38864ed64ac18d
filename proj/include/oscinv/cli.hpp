#pragma once

namespace oscinv::cli {

/// Full command-line front end. Exit codes: 0 success, 1 validation or usage
/// error, 2 numerical failure. Diagnostics go to stderr, data files to the
/// output directory.
int run(int argc, const char* const* argv);

}  // namespace oscinv::cli
