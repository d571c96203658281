#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diffsae/dlm.hpp"
#include "diffsae/judge.hpp"
#include "diffsae/sae.hpp"

namespace diffsae {

struct AutointerpConfig {
  uint32_t context_length = 128;
  uint32_t n_top_windows = 10;   // generation-stage windows
  uint32_t n_scoring = 14;       // scoring examples per feature
  uint32_t n_latents = 1000;     // evaluation cap
  uint32_t latent_batch_size = 100;
  uint32_t dead_latent_threshold = 15;  // minimum activation count over the stream
  uint64_t max_tokens = 262144;
  double activation_threshold = 0.0;  // active means strictly greater
};

struct EvidenceWindow {
  uint32_t window_id = 0;
  std::vector<std::string> tokens;
  std::vector<double> activations;  // feature activation per token
  std::size_t peak_pos = 0;
  double peak_value = 0.0;
  enum class Label { kTopActivating, kImportanceWeighted, kRandomNegative } label =
      Label::kTopActivating;
};

struct Evidence {
  uint32_t feature = 0;
  std::vector<EvidenceWindow> generation;  // ranked by peak, marked when rendered
  std::vector<EvidenceWindow> scoring;     // mixed actives and negatives, judge order
  std::vector<bool> scoring_truth;         // parallel to scoring
};

// Shared first pass over the evidence stream: fixed windows, one forward +
// encode per window, per-feature activation statistics. Per-window latents
// are cached on demand for the second (evidence-building) pass.
class EvidenceIndex {
 public:
  EvidenceIndex(const DlmParams& dlm, const SaeParams& sae, const std::string& corpus,
                const AutointerpConfig& config);

  std::size_t window_count() const { return windows_.size(); }
  std::size_t activation_count(uint32_t feature) const;
  bool is_dead(uint32_t feature) const;

  const DlmParams& dlm() const { return dlm_; }
  const SaeParams& sae() const { return sae_; }
  const AutointerpConfig& config() const { return config_; }

  // Per-token activations of one feature over one window (cached).
  std::vector<double> feature_activations(uint32_t window_id, uint32_t feature);
  std::vector<std::string> window_tokens(uint32_t window_id) const;

  struct WindowPeak {
    uint32_t window_id;
    double peak;
  };
  const std::vector<WindowPeak>& active_windows(uint32_t feature) const;

 private:
  void scan();

  const DlmParams& dlm_;
  const SaeParams& sae_;
  AutointerpConfig config_;
  std::vector<std::vector<uint32_t>> windows_;
  std::vector<std::size_t> counts_;                  // per feature
  std::vector<std::vector<WindowPeak>> per_feature_;  // sorted by (peak desc, window asc)
  // window -> per-position active (index, value) pairs
  std::vector<std::vector<std::vector<std::pair<uint32_t, float>>>> latent_cache_;
};

// nullopt when the feature is dead under the threshold or never activates.
std::optional<Evidence> build_evidence(EvidenceIndex& index, uint32_t feature, Rng& rng);

enum class PromptStage { kExplain, kScore };

struct PromptTemplates {
  std::string explain_system;
  std::string score_system;
  static PromptTemplates builtin();
  static PromptTemplates load(const std::string& dir);
};

struct RenderedPrompt {
  std::string system;
  std::string user;
};

// Byte-exact instantiation: EXPLAIN marks activating tokens with << >>,
// SCORE strips all marks and never shows activation values.
RenderedPrompt render_prompt(const std::vector<EvidenceWindow>& windows, PromptStage stage,
                             const std::string* explanation, const PromptTemplates& templates,
                             double activation_threshold = 0.0);

// Membership agreement over all scoring examples: an example counts when the
// judge's selected/unselected call matches the ground-truth label.
double agreement_accuracy(const std::vector<std::size_t>& predicted_1based,
                          const std::vector<std::size_t>& truth_1based, std::size_t n_examples);

struct ScoringResult {
  uint32_t feature = 0;
  std::vector<std::size_t> predicted;  // 1-based
  std::vector<std::size_t> truth;      // 1-based
  double accuracy = 0.0;
  std::string status = "ok";  // ok | failed:<reason>
};

ScoringResult score_explanation(JudgeClient& judge, uint32_t feature,
                                const std::string& explanation,
                                const std::vector<EvidenceWindow>& scoring,
                                const std::vector<bool>& truth, const PromptTemplates& templates);

struct FeatureInterpretation {
  uint32_t feature = 0;
  std::string explanation;
  ScoringResult scoring;
  std::string status = "ok";  // ok | dead | failed:<reason>
};

// Iterates live features (capped by n_latents), persists one JSON line per
// feature, and skips features already present in the results file.
std::vector<FeatureInterpretation> run_autointerp(EvidenceIndex& index, JudgeClient& judge,
                                                  const PromptTemplates& templates,
                                                  const std::string& results_path, uint64_t seed);

std::map<uint32_t, FeatureInterpretation> load_autointerp_results(const std::string& path);

}  // namespace diffsae
