#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "geoprog/registry.hpp"

namespace geoprog {

// Exit codes of the command-line interface.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitRuntime = 3,
};

// args excludes the program name. Machine-readable output goes to `out`,
// diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Registry shipped with the binary (data/default_registry.json).
const std::string& default_registry_text();
DslRegistry default_registry();

}  // namespace geoprog
