#pragma once

#include <ostream>

namespace fusioncim::cli {

/// Entry point of the `fusioncim` tool. Returns 0 on success, 2 on usage
/// errors and 1 on any other failure.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fusioncim::cli
