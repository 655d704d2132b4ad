#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace dpmvs {

/// Bad flags, unreadable inputs or values that fail validation (exit code 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kVersion = "dpmvs 1.0.0";

std::string sha256_file(const std::filesystem::path& path);

/// Everything needed to repeat a run: the normalized argv (input paths made
/// absolute), the effective configuration and the hashes of inputs/outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;     // path, sha256
  std::vector<std::pair<std::string, std::string>> artifacts;  // path, sha256
  std::string version = kVersion;
  double wall_clock_seconds = 0.0;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  static RunManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Runs one command line (args[0] is the subcommand). Returns 0 on success,
/// 1 on runtime failure, 2 on usage or validation errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace dpmvs
