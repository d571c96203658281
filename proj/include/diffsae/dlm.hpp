#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "diffsae/autograd.hpp"
#include "diffsae/rng.hpp"
#include "diffsae/tensor.hpp"
#include "diffsae/vocab.hpp"

namespace diffsae {

struct DlmConfig {
  uint32_t dim = 64;
  uint32_t layers = 6;
  uint32_t heads = 4;
  uint32_t context = 64;
  double init_std = 0.05;
};

// Token sequence with a per-position mask indicator. For corruption products
// `rate` is the drawn mask rate t in (0,1]; denoising states carry the
// schedule rate (0 once fully decoded).
struct MaskedState {
  std::vector<uint32_t> ids;
  std::vector<uint8_t> masked;
  double rate = 0.0;

  std::size_t masked_count() const;
  std::vector<std::size_t> masked_positions() const;
  std::vector<std::size_t> unmasked_positions() const;
  void check_consistent(uint32_t mask_id) const;

  static MaskedState clean(std::vector<uint32_t> ids);
};

// Each position is independently replaced by MASK with probability t.
MaskedState corrupt(const std::vector<uint32_t>& x0, double t, Rng& rng, uint32_t mask_id);

// Corruption restricted to [span_begin, span_end); other positions stay clean.
MaskedState corrupt_span(const std::vector<uint32_t>& x0, double t, Rng& rng, uint32_t mask_id,
                         std::size_t span_begin, std::size_t span_end);

// t ~ U(0,1); a draw that masks nothing in the span is retried once, then one
// uniform span position is force-masked so the loss stays defined.
struct CorruptionDraw {
  double t;
  MaskedState state;
};
CorruptionDraw draw_corruption(const std::vector<uint32_t>& x0, Rng& rng, uint32_t mask_id,
                               std::size_t span_begin, std::size_t span_end);
CorruptionDraw draw_corruption(const std::vector<uint32_t>& x0, Rng& rng, uint32_t mask_id);

// Pre-norm bidirectional transformer over byte tokens.
struct DlmParams {
  struct Block {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  };

  DlmConfig config;
  Vocab vocab = Vocab::bytes();
  std::string backbone_id = "toy-dlm";

  Tensor tok_emb;  // [V x d]
  Tensor pos_emb;  // [context x d]
  std::vector<Block> blocks;
  Tensor final_ln_gain, final_ln_bias;
  Tensor unembed_w;  // [V x d]
  Tensor unembed_b;  // [V]

  static DlmParams init(const DlmConfig& config, const Vocab& vocab, Rng& rng,
                        std::string backbone_id = "toy-dlm");

  std::vector<std::pair<std::string, Tensor*>> named_params();
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;

  // Shares parameter values, fresh gradient buffers: the per-sample leaf set
  // used when several graphs run in parallel against one parameter store.
  DlmParams as_leaves() const;

  void save(const std::string& path) const;
  static DlmParams load(const std::string& path);
};

// Edit applied to the post-block residual at one layer before the next block
// (or the final norm) consumes it. Only legal outside gradient recording.
struct ResidualHook {
  uint32_t layer = 0;
  std::function<void(Tensor& x, const MaskedState& state)> apply;
};

struct ForwardResult {
  Tensor logits;                  // [N x V]
  std::vector<Tensor> residuals;  // post-block stream per layer, [N x d]
};

ForwardResult dlm_forward(const DlmParams& params, const MaskedState& state,
                          const ResidualHook* hook = nullptr);

// Per-sample term of the training objective: w(t) * sum_{masked i} CE_i with
// w(t) = 1/t. Differentiable w.r.t. params when they are leaves.
Tensor sample_loss_graph(const DlmParams& params, const std::vector<uint32_t>& x0,
                         const MaskedState& state);

// Monte-Carlo batch estimate (mean over samples of the per-sample term);
// evaluation path, no gradients.
double dlm_loss(const DlmParams& params, const std::vector<std::vector<uint32_t>>& batch,
                Rng& rng, const ResidualHook* hook = nullptr);

}  // namespace diffsae
