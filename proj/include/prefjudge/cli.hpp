#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace prefjudge::cli {

// Entry point shared by the binary and in-process tests. args excludes the
// program name. Returns the process exit code (see prefjudge::exit_code).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Long flag names per scope: {"global": [...], "<subcommand>": [...]}.
nlohmann::json describe_flags();

}  // namespace prefjudge::cli
