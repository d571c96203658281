#include "diffsae/harvest.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "diffsae/rng.hpp"

namespace diffsae {

std::vector<std::size_t> select_positions(const MaskedState& state, Selector selector) {
  switch (selector) {
    case Selector::kMasked: return state.masked_positions();
    case Selector::kUnmasked: return state.unmasked_positions();
    case Selector::kAll: {
      std::vector<std::size_t> all(state.ids.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      return all;
    }
  }
  throw std::logic_error("unknown selector");
}

ActivationStore harvest(const DlmParams& dlm, const std::string& corpus_text,
                        const HarvestConfig& config, uint64_t seed) {
  if (config.budget == 0) throw std::invalid_argument("harvest: budget must be positive");
  if (config.layer >= dlm.config.layers)
    throw std::invalid_argument("harvest: layer " + std::to_string(config.layer) +
                                " not in a " + std::to_string(dlm.config.layers) + "-layer model");
  const std::vector<uint32_t> corpus_ids = dlm.vocab.encode(corpus_text);
  const std::size_t window =
      config.window ? std::min<std::size_t>(config.window, dlm.config.context) : dlm.config.context;
  if (corpus_ids.size() < 2) throw std::invalid_argument("harvest: corpus too small");

  ActivationStore store;
  store.backbone_id = dlm.backbone_id;
  store.layer = config.layer;
  store.dim = dlm.config.dim;
  store.selector = config.selector;
  store.protocol_hash = fnv1a64(dlm.backbone_id) ^ seed ^ (0x9e3779b97f4a7c15ULL * window) ^
                        fnv1a64(corpus_text);

  ag::NoGradGuard no_grad;
  const uint32_t mask_id = dlm.vocab.mask_id();
  const std::size_t d = dlm.config.dim;

  struct SampleOut {
    std::vector<std::size_t> positions;
    std::vector<double> rows;  // positions.size() x d
    double rate = 0.0;
  };

  // Forward passes fan out over a chunk of samples; appends happen in sample
  // order afterwards so the store layout is seed-deterministic.
  const std::size_t chunk = 16;
  uint64_t sample_id = 0;
  std::size_t skipped = 0;
  while (store.count() < config.budget) {
    std::vector<SampleOut> outs(chunk);
    const uint64_t base = sample_id;
#pragma omp parallel for schedule(dynamic)
    for (long long c = 0; c < static_cast<long long>(chunk); ++c) {
      const uint64_t id = base + static_cast<uint64_t>(c);
      Rng window_rng(substream_seed(seed, "harvest-window", id));
      Rng corruption_rng(substream_seed(seed, "harvest-corruption", id));
      std::vector<uint32_t> x0;
      if (corpus_ids.size() <= window) {
        x0 = corpus_ids;
      } else {
        const std::size_t start =
            static_cast<std::size_t>(window_rng.below(corpus_ids.size() - window + 1));
        x0.assign(corpus_ids.begin() + start, corpus_ids.begin() + start + window);
      }
      double t = corruption_rng.uniform01();
      if (t <= 0.0) t = 1e-12;
      MaskedState state = corrupt(x0, t, corruption_rng, mask_id);
      SampleOut& out = outs[c];
      out.rate = t;
      out.positions = select_positions(state, config.selector);
      if (out.positions.empty()) continue;
      ForwardResult fwd = dlm_forward(dlm, state);
      const Tensor& res = fwd.residuals[config.layer];
      out.rows.resize(out.positions.size() * d);
      for (std::size_t pi = 0; pi < out.positions.size(); ++pi)
        std::copy_n(res.ptr() + out.positions[pi] * d, d, out.rows.data() + pi * d);
    }
    for (std::size_t c = 0; c < chunk && store.count() < config.budget; ++c) {
      const SampleOut& out = outs[c];
      if (out.positions.empty()) {
        ++skipped;
        continue;
      }
      for (std::size_t pi = 0; pi < out.positions.size() && store.count() < config.budget; ++pi) {
        ActivationStore::RecordMeta m{};
        m.sample_id = base + c;
        m.position = static_cast<uint32_t>(out.positions[pi]);
        m.rate = static_cast<float>(out.rate);
        store.append(m, out.rows.data() + pi * d);
      }
    }
    sample_id += chunk;
  }
  if (skipped > 0)
    std::fprintf(stderr, "harvest: skipped %zu samples with an empty %s selection\n", skipped,
                 selector_name(config.selector).c_str());
  return store;
}

}  // namespace diffsae
