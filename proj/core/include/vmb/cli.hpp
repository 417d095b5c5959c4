#pragma once

#include <string>
#include <vector>

namespace vmb {

// Entry point behind the `vmb` binary; also callable in-process by tests.
// args excludes the program name. Returns 0 on success, 1 on validation or
// usage errors, 2 on I/O and file-format errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace vmb
