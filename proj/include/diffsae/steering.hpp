#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "diffsae/decode.hpp"
#include "diffsae/dlm.hpp"
#include "diffsae/judge.hpp"
#include "diffsae/sae.hpp"

namespace diffsae {

enum class TokenScope { kAllTokens, kUpdateTokens, kTopKPositions };
std::string token_scope_name(TokenScope s);
// "all", "update", or "topk:<n>".
TokenScope token_scope_from_name(const std::string& name, uint32_t* k_pos);

struct SteeringSpec {
  uint32_t feature = 0;
  double alpha = 1.0;  // steering strength
  double m_f = 1.0;    // per-feature scale in activation units
  uint32_t layer = 0;
  TokenScope scope = TokenScope::kAllTokens;
  uint32_t k_pos = 0;  // for kTopKPositions
};

// Row selector s_k for one hook application.
std::vector<uint8_t> steer_selector(const Tensor& x, const SteeringSpec& spec,
                                    const SaeParams& sae, const MaskedState& state);

// X += alpha * m_f * s_k v_f^T. A zero net scale leaves X bit-identical.
void steer_rows(Tensor& x, const SteeringSpec& spec, const SaeParams& sae,
                const MaskedState& state);

ResidualHook make_steer_hook(const SteeringSpec& spec, const SaeParams& sae,
                             std::size_t* fire_count = nullptr);

// 99th percentile (nearest-rank) of the feature's nonzero activations over
// the store; 0 with a warning when the feature never activates.
double calibrate_m_f(const SaeParams& sae, const ActivationStore& store, uint32_t feature);
std::vector<double> calibrate_m_f_batch(const SaeParams& sae, const ActivationStore& store,
                                        const std::vector<uint32_t>& features);

// Masked pseudo-perplexity of ids[eval_begin, eval_end): each position is
// masked one at a time and predicted from full bidirectional context.
double pseudo_perplexity(const DlmParams& dlm, const std::vector<uint32_t>& ids,
                         std::size_t eval_begin, std::size_t eval_end);

class ConceptScorer {
 public:
  virtual ~ConceptScorer() = default;
  virtual double score(const std::string& text) = 0;
  virtual double scale() const = 0;  // s_C
  virtual std::string id() const = 0;
};

// Counts occurrences of any lexicon term; deterministic, s_C = 1.
class LexiconScorer : public ConceptScorer {
 public:
  explicit LexiconScorer(std::vector<std::string> terms);
  double score(const std::string& text) override;
  double scale() const override { return 1.0; }
  std::string id() const override { return "lexicon"; }

 private:
  std::vector<std::string> terms_;
};

// Asks a judge to rate concept presence 0-100; s_C = 100.
class JudgeConceptScorer : public ConceptScorer {
 public:
  JudgeConceptScorer(JudgeClient& judge, std::string concept_description);
  double score(const std::string& text) override;
  double scale() const override { return 100.0; }
  std::string id() const override { return "judge"; }

 private:
  JudgeClient& judge_;
  std::string concept_;
};

double steering_score(double c, double p, double lambda);

struct PrefixScore {
  std::string prefix;
  double concept_before = 0.0, concept_after = 0.0;
  double ppl_before = 0.0, ppl_after = 0.0;
};

struct SteeringOutcome {
  uint32_t feature = 0;
  double c = 0.0, p = 0.0, s = 0.0;
  std::vector<PrefixScore> per_prefix;
};

struct SteeringEvalOptions {
  std::size_t n_prefix = 5;
  std::size_t max_new_tokens = 30;
  std::size_t dlm_steps = 30;
  DecodeStrategy strategy = DecodeStrategy::kEntropy;
  double lambda = 0.3;
};

// Generates with and without diffusion-time steering per prefix under a
// shared seed, then combines prefix-averaged raw scores into C, P, S.
// calibration_store, when given, overrides spec_template.m_f per feature.
std::vector<SteeringOutcome> steering_eval(const DlmParams& dlm, const SaeParams& sae,
                                           const std::vector<uint32_t>& features,
                                           const std::vector<std::string>& prefix_pool,
                                           ConceptScorer& scorer, const SteeringSpec& spec_template,
                                           const SteeringEvalOptions& opts,
                                           const ActivationStore* calibration_store, uint64_t seed);

std::vector<std::string> load_prefix_pool(const std::string& path);

void write_steering_csv(const std::vector<SteeringOutcome>& outcomes, const SteeringSpec& spec,
                        uint64_t seed, const std::string& path);

}  // namespace diffsae
