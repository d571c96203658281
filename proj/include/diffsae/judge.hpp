#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "diffsae/rng.hpp"

namespace diffsae {

// Two-stage judge: an explanation request returns free text, a scoring
// request must return "None" or a comma-separated list of 1-based indices.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string complete(const std::string& system_prompt, const std::string& user_prompt) = 0;
  virtual std::string id() const = 0;
};

struct JudgeEndpointConfig {
  std::string base_url = "http://127.0.0.1:8741";
  std::string model = "local-judge";
  std::string auth_token_env = "DIFFSAE_JUDGE_TOKEN";
  std::string path = "/v1/chat/completions";
  int timeout_seconds = 30;
  int retries = 2;
};

// Minimal chat-completion wire shape over HTTP; any compatible endpoint
// serves. Transport failures are retried up to the configured budget.
class HttpJudge : public JudgeClient {
 public:
  explicit HttpJudge(JudgeEndpointConfig config);
  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override;
  std::string id() const override { return "http:" + config_.model; }

 private:
  JudgeEndpointConfig config_;
};

// Deterministic offline judge. Explanation stage: extracts the most frequent
// <<marked>> span and names it. Scoring stage: selects the examples containing
// the span quoted in the explanation. Concept-rating prompts get a hit-count
// score.
class LexicalMockJudge : public JudgeClient {
 public:
  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override;
  std::string id() const override { return "mock:lexical"; }
};

// Selects each scoring example with probability one half; used to calibrate
// the agreement metric against chance.
class RandomJudge : public JudgeClient {
 public:
  explicit RandomJudge(uint64_t seed) : rng_(seed) {}
  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override;
  std::string id() const override { return "mock:random"; }

 private:
  Rng rng_;
};

// "None" -> empty set; otherwise 1-based indices, each at most n_examples.
// nullopt when the reply does not parse.
std::optional<std::vector<std::size_t>> parse_index_reply(const std::string& reply,
                                                          std::size_t n_examples);

// Splits a numbered-example block ("1. ...\n\n2. ...") back into texts.
std::vector<std::string> parse_numbered_examples(const std::string& block);

std::unique_ptr<JudgeClient> make_judge(const std::string& kind, const JudgeEndpointConfig& config,
                                        uint64_t seed);

}  // namespace diffsae
