#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrlab/labs.hpp"

namespace rrlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitAssertion = 1;
inline constexpr int kExitUsage = 2;

// A diagnostic meant for the user; maps to exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Entry point of the rrlab tool. args[0] is the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct ConfigRequest {
  std::optional<std::string> scenario;
  std::optional<std::filesystem::path> config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> seeds;
  // Value of RRLAB_SEED, if set. --seeds wins over it.
  std::optional<std::string> env_seed;
};

// Loads, merges, overrides and validates. Throws UsageError with a
// file:line prefix when the fault can be located in the config file.
ScenarioConfig resolve_config(const ConfigRequest& request);

// "3", "0-9" or "1,4,7" (ranges and lists may be mixed).
std::vector<std::uint64_t> parse_seed_list(const std::string& spec);

// 1-based line of the first occurrence of the dotted key's last component,
// searched after its parents; 0 when it cannot be found.
std::size_t locate_key(const std::string& text, const std::string& dotted_key);

// manifest.json is written last, so its presence marks a complete directory.
void write_artifacts(const ScenarioReport& report, const std::filesystem::path& out_dir, const json& manifest);

// Text table of arms and scenario tables plus verdict lines.
std::string render_report(const std::filesystem::path& dir);

}  // namespace rrlab
