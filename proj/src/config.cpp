#include "diffsae/config.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "diffsae/io.hpp"

namespace diffsae {

namespace {

enum class Kind { kInt, kDouble, kBool, kString };

struct SchemaEntry {
  const char* section;
  const char* key;
  Kind kind;
  const char* default_value;
};

// Defaults follow the experiment constants the evaluation suites assume
// (steering lambda 0.3, 5 prefixes x 30 tokens x 30 steps, 14 scoring
// examples, dead-latent threshold 15, 128-token evidence windows).
constexpr SchemaEntry kSchema[] = {
    {"model", "dim", Kind::kInt, "64"},
    {"model", "layers", Kind::kInt, "6"},
    {"model", "heads", Kind::kInt, "4"},
    {"model", "context", Kind::kInt, "64"},
    {"model", "vocab", Kind::kString, "bytes"},
    {"model", "init_std", Kind::kDouble, "0.05"},
    {"model", "backbone_id", Kind::kString, "toy-dlm"},

    {"train", "steps", Kind::kInt, "2000"},
    {"train", "batch", Kind::kInt, "16"},
    {"train", "lr", Kind::kDouble, "0.001"},
    {"train", "beta1", Kind::kDouble, "0.9"},
    {"train", "beta2", Kind::kDouble, "0.999"},
    {"train", "adam_eps", Kind::kDouble, "1e-8"},
    {"train", "window", Kind::kInt, "0"},

    {"sae", "width", Kind::kInt, "0"},
    {"sae", "width_factor", Kind::kInt, "16"},
    {"sae", "k_act", Kind::kInt, "32"},
    {"sae", "lambda", Kind::kDouble, "0"},
    {"sae", "epochs", Kind::kInt, "2"},
    {"sae", "batch", Kind::kInt, "256"},
    {"sae", "lr", Kind::kDouble, "0.001"},

    {"harvest", "budget", Kind::kInt, "65536"},
    {"harvest", "window", Kind::kInt, "0"},

    {"eval", "tokens", Kind::kInt, "65536"},
    {"eval", "window", Kind::kInt, "0"},
    {"eval", "store_budget", Kind::kInt, "16384"},
    {"eval", "rollout_prompts", Kind::kInt, "8"},
    {"eval", "rollout_tokens", Kind::kInt, "30"},
    {"eval", "rollout_steps", Kind::kInt, "30"},

    {"steering", "alpha", Kind::kDouble, "3"},
    {"steering", "steps", Kind::kInt, "30"},
    {"steering", "max_new_tokens", Kind::kInt, "30"},
    {"steering", "n_prefix", Kind::kInt, "5"},
    {"steering", "lambda", Kind::kDouble, "0.3"},
    {"steering", "scope", Kind::kString, "all"},
    {"steering", "layer", Kind::kInt, "5"},
    {"steering", "scorer", Kind::kString, "lexicon"},
    {"steering", "lexicon", Kind::kString, ""},
    {"steering", "concept", Kind::kString, ""},
    {"steering", "strategy", Kind::kString, "entropy"},

    {"order", "k_feat", Kind::kInt, "10"},
    {"order", "tau_bins", Kind::kInt, "20"},
    {"order", "gen_len", Kind::kInt, "24"},
    {"order", "steps", Kind::kInt, "24"},
    {"order", "runs", Kind::kInt, "4"},

    {"autointerp", "context_length", Kind::kInt, "128"},
    {"autointerp", "n_top", Kind::kInt, "10"},
    {"autointerp", "n_scoring", Kind::kInt, "14"},
    {"autointerp", "n_latents", Kind::kInt, "1000"},
    {"autointerp", "latent_batch_size", Kind::kInt, "100"},
    {"autointerp", "dead_threshold", Kind::kInt, "15"},
    {"autointerp", "max_tokens", Kind::kInt, "262144"},
    {"autointerp", "judge", Kind::kString, "mock"},
    {"autointerp", "judge_url", Kind::kString, "http://127.0.0.1:8741"},
    {"autointerp", "judge_model", Kind::kString, "local-judge"},
    {"autointerp", "judge_token_env", Kind::kString, "DIFFSAE_JUDGE_TOKEN"},
    {"autointerp", "judge_timeout", Kind::kInt, "30"},
    {"autointerp", "judge_retries", Kind::kInt, "2"},
};

const SchemaEntry* find_schema(const std::string& section, const std::string& key) {
  for (const auto& e : kSchema)
    if (section == e.section && key == e.key) return &e;
  return nullptr;
}

ExperimentConfig::Value parse_value(const SchemaEntry& entry, const std::string& raw,
                                    const std::string& path) {
  switch (entry.kind) {
    case Kind::kInt: {
      try {
        std::size_t used = 0;
        const int64_t v = std::stoll(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
      } catch (...) {
        throw std::invalid_argument("config " + path + ": expected an integer, got '" + raw + "'");
      }
    }
    case Kind::kDouble: {
      try {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
      } catch (...) {
        throw std::invalid_argument("config " + path + ": expected a number, got '" + raw + "'");
      }
    }
    case Kind::kBool: {
      if (raw == "true") return true;
      if (raw == "false") return false;
      throw std::invalid_argument("config " + path + ": expected true/false, got '" + raw + "'");
    }
    case Kind::kString: {
      if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
        return raw.substr(1, raw.size() - 2);
      return raw;
    }
  }
  throw std::logic_error("unreachable");
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string format_value(const ExperimentConfig::Value& v) {
  if (std::holds_alternative<int64_t>(v)) return std::to_string(std::get<int64_t>(v));
  if (std::holds_alternative<double>(v)) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", std::get<double>(v));
    return buf;
  }
  if (std::holds_alternative<bool>(v)) return std::get<bool>(v) ? "true" : "false";
  return "\"" + std::get<std::string>(v) + "\"";
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  for (const auto& e : kSchema)
    c.values_[e.section][e.key] =
        parse_value(e, e.default_value, std::string(e.section) + "." + e.key);
  return c;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c = defaults();
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(line_no) + ": bad section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string raw = trim(t.substr(eq + 1));
    const std::string path = section + "." + key;
    const SchemaEntry* entry = find_schema(section, key);
    if (!entry) throw std::invalid_argument("config: unknown key " + path);
    c.values_[section][key] = parse_value(*entry, raw, path);
  }
  return c;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  return parse(io::read_text_file(path));
}

std::string ExperimentConfig::serialize() const {
  std::string out;
  std::string current;
  for (const auto& e : kSchema) {
    if (current != e.section) {
      if (!out.empty()) out += "\n";
      current = e.section;
      out += "[" + current + "]\n";
    }
    out += std::string(e.key) + " = " + format_value(values_.at(e.section).at(e.key)) + "\n";
  }
  return out;
}

const ExperimentConfig::Value& ExperimentConfig::lookup(const std::string& section,
                                                        const std::string& key) const {
  auto s = values_.find(section);
  if (s == values_.end()) throw std::invalid_argument("config: unknown section " + section);
  auto k = s->second.find(key);
  if (k == s->second.end()) throw std::invalid_argument("config: unknown key " + section + "." + key);
  return k->second;
}

int64_t ExperimentConfig::get_int(const std::string& section, const std::string& key) const {
  return std::get<int64_t>(lookup(section, key));
}

double ExperimentConfig::get_double(const std::string& section, const std::string& key) const {
  const Value& v = lookup(section, key);
  if (std::holds_alternative<int64_t>(v)) return static_cast<double>(std::get<int64_t>(v));
  return std::get<double>(v);
}

bool ExperimentConfig::get_bool(const std::string& section, const std::string& key) const {
  return std::get<bool>(lookup(section, key));
}

const std::string& ExperimentConfig::get_str(const std::string& section,
                                             const std::string& key) const {
  return std::get<std::string>(lookup(section, key));
}

void ExperimentConfig::set_from_string(const std::string& path, const std::string& value) {
  const std::size_t dot = path.find('.');
  if (dot == std::string::npos)
    throw std::invalid_argument("config path must look like section.key: " + path);
  const std::string section = path.substr(0, dot), key = path.substr(dot + 1);
  const SchemaEntry* entry = find_schema(section, key);
  if (!entry) throw std::invalid_argument("config: unknown key " + path);
  values_[section][key] = parse_value(*entry, value, path);
}

}  // namespace diffsae
