#include "diffsae/manifest.hpp"

#include <filesystem>
#include <stdexcept>

#include "diffsae/io.hpp"

namespace diffsae {

void RunManifest::add_input(const std::string& path) {
  inputs[path] = io::hex_u64(io::file_digest_fnv1a64(path));
}

void RunManifest::write(const std::string& out_dir) const {
  nlohmann::json j;
  j["tool"] = {{"name", kToolName}, {"version", kToolVersion}};
  j["command"] = command;
  j["config"] = config_text;
  j["master_seed"] = master_seed;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["status"] = status;
  if (!extra.is_null()) j["extra"] = extra;
  io::write_text_file(out_dir + "/manifest.json", j.dump(2) + "\n");
}

RunManifest RunManifest::read_dir(const std::string& out_dir) {
  nlohmann::json j = nlohmann::json::parse(io::read_text_file(out_dir + "/manifest.json"));
  RunManifest m;
  m.command = j["command"].get<std::string>();
  m.config_text = j["config"].get<std::string>();
  m.master_seed = j["master_seed"].get<uint64_t>();
  m.inputs = j["inputs"].get<std::map<std::string, std::string>>();
  m.outputs = j["outputs"].get<std::vector<std::string>>();
  m.wall_clock_seconds = j["wall_clock_seconds"].get<double>();
  m.status = j["status"].get<std::string>();
  if (j.contains("extra")) m.extra = j["extra"];
  return m;
}

void prepare_out_dir(const std::string& out_dir, bool force) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path manifest = fs::path(out_dir) / "manifest.json";
  if (fs::exists(manifest) && !force)
    throw std::runtime_error(out_dir +
                             " already holds a manifest; pass --force to overwrite the run");
}

}  // namespace diffsae
