#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffsae/dlm.hpp"
#include "diffsae/sae.hpp"
#include "diffsae/train.hpp"

namespace diffsae {

enum class EvalProtocol { kDenoising, kRollout };
std::string protocol_name(EvalProtocol p);

struct FidelityRecord {
  std::string backbone_id;
  std::string sae_id;
  uint32_t layer = 0;
  uint32_t k_act = 0;
  double ev = 0.0;
  double delta_loss = 0.0;
  uint64_t eval_tokens = 0;
  std::string protocol;
  uint64_t seed = 0;
};

// 1 - E||x - x_hat||^2 / E||x||^2, means taken over the store.
double explained_variance(const SaeParams& sae, const ActivationStore& store);

// A fixed set of (x0, corrupted state) pairs; both passes of a delta-loss
// evaluation walk the same set, so corruption draws are shared by
// construction.
struct EvalSample {
  std::vector<uint32_t> x0;
  MaskedState state;
};

struct EvalSetOptions {
  uint64_t eval_tokens = 65536;
  uint32_t window = 0;  // 0 = model context
};

std::vector<EvalSample> make_denoising_eval_set(const DlmParams& dlm, const std::string& corpus,
                                                const EvalSetOptions& opts, uint64_t seed);

struct RolloutOptions {
  std::size_t prompts = 8;
  std::size_t gen_len = 30;
  std::size_t steps = 30;
};

// Generates assistant continuations with the target model (30 steps / 30
// tokens by default) and corrupts only the rollout span.
std::vector<EvalSample> make_rollout_eval_set(const DlmParams& dlm,
                                              const std::vector<InstructionRecord>& prompts,
                                              const RolloutOptions& opts, uint64_t seed);

// Mean over samples of w(t) * sum_{masked} CE, optionally with a residual
// hook spliced in.
double eval_masked_loss(const DlmParams& dlm, const std::vector<EvalSample>& samples,
                        const ResidualHook* hook = nullptr);

ResidualHook make_sae_splice_hook(const SaeParams& sae, uint32_t layer);
ResidualHook make_identity_splice_hook(uint32_t layer);

// L_ins - L over a shared eval set.
double delta_dlm_loss(const DlmParams& dlm, const SaeParams& sae, uint32_t layer,
                      const std::vector<EvalSample>& samples);

struct SweepOptions {
  EvalSetOptions eval;
  uint64_t store_budget = 16384;  // per-layer EV store size
  std::string protocol = "denoising";
};

// One record per SAE; EV comes from a per-(layer, selector) store harvested
// from the same backbone, delta-loss from a shared eval set.
std::vector<FidelityRecord> sparsity_sweep(const DlmParams& dlm,
                                           const std::vector<SaeParams>& saes,
                                           const std::string& eval_corpus,
                                           const SweepOptions& opts, uint64_t seed);

// Cross-inserts SAEs (trained on base or SFT backbones) into `target`.
std::vector<FidelityRecord> transfer_eval(const DlmParams& target,
                                          const std::vector<SaeParams>& saes,
                                          const std::string& eval_corpus,
                                          const std::vector<InstructionRecord>& rollout_prompts,
                                          EvalProtocol protocol, const SweepOptions& opts,
                                          uint64_t seed);

std::string sae_display_id(const SaeParams& sae);

void write_fidelity_csv(const std::vector<FidelityRecord>& records, const std::string& path);
void write_fidelity_json(const std::vector<FidelityRecord>& records, const std::string& path);

}  // namespace diffsae
