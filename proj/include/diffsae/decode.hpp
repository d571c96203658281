#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "diffsae/dlm.hpp"
#include "diffsae/trace.hpp"

namespace diffsae {

// Mask-rate schedule: rates[k] = t_k with t_0 = 0 < t_1 < ... < t_K <= 1.
// Step k of denoising moves a state at rate t_k to rate t_{k-1}.
struct NoiseSchedule {
  std::vector<double> rates;

  static NoiseSchedule linear(std::size_t steps);
  std::size_t steps() const { return rates.empty() ? 0 : rates.size() - 1; }
  void validate() const;
};

enum class DecodeStrategy { kOrigin, kTopKMargin, kEntropy };

std::string strategy_name(DecodeStrategy s);
DecodeStrategy strategy_from_name(const std::string& name);

// Total order over the masked positions, most-confident-first (Origin is a
// seeded shuffle). Ties break toward the lowest position index.
std::vector<std::size_t> rank_positions(const Tensor& logits,
                                        const std::vector<std::size_t>& masked_positions,
                                        DecodeStrategy strategy, Rng& rng);

// Latent probe used for trace recording: returns the rank-ordered strongest
// latent indices (at most k_feat) and the top-1 index (-1 when all zero).
using LatentProbe =
    std::function<std::pair<std::vector<uint32_t>, int64_t>(uint32_t layer, const double* row)>;

struct TraceConfig {
  std::vector<uint32_t> layers;
  uint32_t k_feat = 10;
  LatentProbe probe;
};

struct GenerateOptions {
  DecodeStrategy strategy = DecodeStrategy::kEntropy;
  // 0 = greedy argmax; otherwise softmax sampling at this temperature.
  double temperature = 0.0;
  const ResidualHook* hook = nullptr;
  const TraceConfig* trace = nullptr;
};

// One denoising step: state must be at schedule rate index k (k in [1, K]).
// Fills masked positions from the model prediction for the top-ranked
// positions so that the remaining masked count equals round(t_{k-1} * span).
// Committed positions are never re-masked.
MaskedState denoise_step(const MaskedState& state, const DlmParams& params,
                         const NoiseSchedule& schedule, std::size_t k, std::size_t span_begin,
                         std::size_t span_len, const GenerateOptions& opts, Rng& rng,
                         DecodingTrace* trace_out = nullptr);

struct GenerateResult {
  std::vector<uint32_t> ids;  // full sequence, prompt included
  DecodingTrace trace;        // populated when opts.trace is set
};

GenerateResult generate(const DlmParams& params, const std::vector<uint32_t>& prompt,
                        std::size_t gen_len, std::size_t steps, const GenerateOptions& opts,
                        uint64_t seed);

}  // namespace diffsae
