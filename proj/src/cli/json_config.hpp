#pragma once

#include <set>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace prefjudge::cli {

// Top-level config sections consumed directly by the loader rather than
// mapped onto flags.
inline const std::set<std::string> kStructuredSections{"endpoints", "generation", "retry"};

// Reads a JSON run config for CLI11: top-level scalars map to global flags,
// objects named after a subcommand map to that subcommand's flags.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                          std::string prefix) const override;
    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;
};

// Effective flag values of an app (and, recursively, its parsed
// subcommands) as a JSON object keyed like the config file.
nlohmann::json effective_options(const CLI::App& app);

// Checks structure, types and ranges of a config document against the
// published schema; `app` supplies the known flags per subcommand. Throws
// ConfigError.
void validate_config(const nlohmann::json& config, const CLI::App& app);

}  // namespace prefjudge::cli
