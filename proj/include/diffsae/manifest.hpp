#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace diffsae {

inline constexpr const char* kToolName = "diffsae";
inline constexpr const char* kToolVersion = "0.1.0";

// Every experiment output directory carries exactly one manifest tying the
// outputs to the command, resolved config, seeds, and input digests.
struct RunManifest {
  std::string command;
  std::string config_text;  // canonical serialized config
  uint64_t master_seed = 0;
  std::map<std::string, std::string> inputs;  // path -> fnv1a64 hex digest
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  std::string status = "ok";
  nlohmann::json extra;  // command-specific payload (loss curves, counts)

  void add_input(const std::string& path);

  void write(const std::string& out_dir) const;
  static RunManifest read_dir(const std::string& out_dir);
};

// Creates the directory if needed; refuses to reuse a directory that already
// holds a manifest unless force is set.
void prepare_out_dir(const std::string& out_dir, bool force);

}  // namespace diffsae
