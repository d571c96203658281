#include "diffsae/judge.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <sstream>
#include <stdexcept>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace diffsae {

HttpJudge::HttpJudge(JudgeEndpointConfig config) : config_(std::move(config)) {}

std::string HttpJudge::complete(const std::string& system_prompt, const std::string& user_prompt) {
  nlohmann::json body = {
      {"model", config_.model},
      {"messages",
       {{{"role", "system"}, {"content", system_prompt}}, {{"role", "user"}, {"content", user_prompt}}}}};

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (const char* token = std::getenv(config_.auth_token_env.c_str()); token && *token)
    headers.emplace("Authorization", std::string("Bearer ") + token);

  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    auto res = client.Post(config_.path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty()) {
      last_error = "malformed response body";
      continue;
    }
    return reply["choices"][0]["message"]["content"].get<std::string>();
  }
  throw std::runtime_error("judge request failed after " + std::to_string(config_.retries + 1) +
                           " attempts: " + last_error);
}

namespace {

std::vector<std::string> marked_spans(const std::string& text) {
  std::vector<std::string> spans;
  std::size_t pos = 0;
  while ((pos = text.find("<<", pos)) != std::string::npos) {
    const std::size_t end = text.find(">>", pos + 2);
    if (end == std::string::npos) break;
    spans.push_back(text.substr(pos + 2, end - pos - 2));
    pos = end + 2;
  }
  return spans;
}

std::string most_frequent(const std::vector<std::string>& items) {
  std::map<std::string, std::size_t> counts;
  for (const auto& s : items) ++counts[s];
  std::string best;
  std::size_t best_count = 0;
  for (const auto& [s, c] : counts) {
    if (c > best_count) {
      best = s;
      best_count = c;
    }
  }
  return best;
}

std::optional<std::string> quoted_fragment(const std::string& text) {
  const std::size_t a = text.find('"');
  if (a == std::string::npos) return std::nullopt;
  const std::size_t b = text.find('"', a + 1);
  if (b == std::string::npos) return std::nullopt;
  return text.substr(a + 1, b - a - 1);
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0, pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

}  // namespace

std::vector<std::string> parse_numbered_examples(const std::string& block) {
  std::vector<std::string> examples;
  std::size_t search = 0;
  for (std::size_t n = 1;; ++n) {
    const std::string tag = std::to_string(n) + ". ";
    const std::string sep = (n == 1) ? tag : "\n\n" + tag;
    const std::size_t start = block.find(sep, search);
    if (start == std::string::npos) break;
    const std::size_t body_start = start + sep.size();
    const std::string next_sep = "\n\n" + std::to_string(n + 1) + ". ";
    const std::size_t next = block.find(next_sep, body_start);
    if (next == std::string::npos) {
      std::string tail = block.substr(body_start);
      while (!tail.empty() && (tail.back() == '\n' || tail.back() == '\r')) tail.pop_back();
      examples.push_back(tail);
      break;
    }
    examples.push_back(block.substr(body_start, next - body_start));
    search = next;
  }
  return examples;
}

std::string LexicalMockJudge::complete(const std::string&, const std::string& user_prompt) {
  if (user_prompt.rfind("Concept:", 0) == 0) {
    // Concept-rating request: "Concept: <desc>\nText: <text>".
    const std::size_t nl = user_prompt.find('\n');
    std::string concept_line = user_prompt.substr(8, nl == std::string::npos ? std::string::npos : nl - 8);
    while (!concept_line.empty() && concept_line.front() == ' ') concept_line.erase(0, 1);
    const std::string text = nl == std::string::npos ? "" : user_prompt.substr(nl + 1);
    std::size_t hits = 0;
    std::istringstream words(concept_line);
    std::string w;
    while (words >> w) hits += count_occurrences(text, w);
    return std::to_string(std::min<std::size_t>(100, 10 * hits));
  }

  const auto spans = marked_spans(user_prompt);
  if (!spans.empty()) {
    return "Activates on occurrences of \"" + most_frequent(spans) + "\".";
  }

  // Scoring stage: pick examples containing the explanation's quoted span.
  const std::size_t ex_start = user_prompt.find("Here are the examples:");
  const auto fragment = quoted_fragment(user_prompt);
  if (ex_start == std::string::npos || !fragment)
    throw std::runtime_error("lexical mock judge: unrecognized prompt");
  const auto examples = parse_numbered_examples(user_prompt.substr(ex_start));
  std::string reply;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].find(*fragment) == std::string::npos) continue;
    if (!reply.empty()) reply += ", ";
    reply += std::to_string(i + 1);
  }
  return reply.empty() ? "None" : reply;
}

std::string RandomJudge::complete(const std::string&, const std::string& user_prompt) {
  const std::size_t ex_start = user_prompt.find("Here are the examples:");
  if (ex_start == std::string::npos) return "a randomly chosen pattern";
  const auto examples = parse_numbered_examples(user_prompt.substr(ex_start));
  std::string reply;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (!rng_.bernoulli(0.5)) continue;
    if (!reply.empty()) reply += ", ";
    reply += std::to_string(i + 1);
  }
  return reply.empty() ? "None" : reply;
}

std::optional<std::vector<std::size_t>> parse_index_reply(const std::string& reply,
                                                          std::size_t n_examples) {
  std::string trimmed;
  for (char c : reply)
    if (c != '\r') trimmed += c;
  while (!trimmed.empty() && (trimmed.back() == '\n' || trimmed.back() == ' ')) trimmed.pop_back();
  std::size_t begin = 0;
  while (begin < trimmed.size() && (trimmed[begin] == ' ' || trimmed[begin] == '\n')) ++begin;
  trimmed = trimmed.substr(begin);
  if (trimmed == "None" || trimmed == "none" || trimmed == "None.") return std::vector<std::size_t>{};
  std::vector<std::size_t> out;
  std::istringstream ss(trimmed);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t value = 0;
    bool any_digit = false;
    for (char c : part) {
      if (c == ' ') continue;
      if (c < '0' || c > '9') return std::nullopt;
      value = value * 10 + static_cast<std::size_t>(c - '0');
      any_digit = true;
    }
    if (!any_digit || value < 1 || value > n_examples) return std::nullopt;
    out.push_back(value);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::unique_ptr<JudgeClient> make_judge(const std::string& kind, const JudgeEndpointConfig& config,
                                        uint64_t seed) {
  if (kind == "mock") return std::make_unique<LexicalMockJudge>();
  if (kind == "random") return std::make_unique<RandomJudge>(seed);
  if (kind == "http") return std::make_unique<HttpJudge>(config);
  throw std::invalid_argument("unknown judge kind: " + kind);
}

}  // namespace diffsae
