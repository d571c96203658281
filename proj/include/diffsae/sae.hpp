#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffsae/activation_store.hpp"
#include "diffsae/rng.hpp"
#include "diffsae/tensor.hpp"

namespace diffsae {

// Top-K sparse autoencoder: h = TopK(ReLU(W_E x + b_E)), x_hat = W_D h + b_D.
// Decoder columns (atoms) are kept at unit norm after every optimizer step.
struct SaeParams {
  uint32_t width = 0;
  uint32_t input_dim = 0;
  uint32_t k_act = 0;
  std::string backbone_id;
  uint32_t layer = 0;
  Selector selector = Selector::kAll;

  Tensor w_enc;  // [width x d]
  Tensor b_enc;  // [width]
  Tensor w_dec;  // [d x width]
  Tensor b_dec;  // [d]

  // Decoder columns start as random unit vectors, encoder as their transpose,
  // biases zero.
  static SaeParams init(uint32_t width, uint32_t input_dim, uint32_t k_act, Rng& rng,
                        std::string backbone_id = "", uint32_t layer = 0,
                        Selector selector = Selector::kAll);

  std::vector<double> decoder_atom(uint32_t feature) const;
  void renormalize_decoder();
  double decoder_atom_norm(uint32_t feature) const;

  void save(const std::string& path) const;
  static SaeParams load(const std::string& path);
};

struct SaeLatents {
  std::vector<double> values;    // dense, width entries, zeros outside active
  std::vector<uint32_t> active;  // indices with value > 0, ascending
};

SaeLatents sae_encode(const SaeParams& sae, const double* x);
SaeLatents sae_encode(const SaeParams& sae, const std::vector<double>& x);
std::vector<double> sae_decode(const SaeParams& sae, const SaeLatents& h);
std::vector<double> sae_reconstruct(const SaeParams& sae, const double* x);

// Rank-ordered strongest latent indices (at most k of them) plus the top-1
// index, for decoding traces.
std::pair<std::vector<uint32_t>, int64_t> strongest_latents(const SaeLatents& h, uint32_t k);

struct SaeTrainConfig {
  uint32_t width = 0;  // 0 = width_factor * d
  uint32_t width_factor = 16;
  uint32_t k_act = 32;
  double l1_lambda = 0.0;
  uint32_t epochs = 2;
  uint32_t batch = 256;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
};

struct SaeTrainResult {
  SaeParams params;
  std::vector<double> loss_curve;  // per optimizer step: mean ||x-x_hat||^2 + lambda*||h||_1
};

SaeTrainResult train_sae(const ActivationStore& store, const SaeTrainConfig& config, uint64_t seed);

// Latents active (value > 0 after TopK) fewer than `threshold` times across
// the store count as dead.
std::size_t dead_latent_count(const SaeParams& sae, const ActivationStore& store,
                              std::size_t threshold);

}  // namespace diffsae
