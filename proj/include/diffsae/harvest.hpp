#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffsae/activation_store.hpp"
#include "diffsae/dlm.hpp"

namespace diffsae {

struct HarvestConfig {
  uint32_t layer = 0;
  Selector selector = Selector::kMasked;
  std::size_t budget = 65536;  // number of activation records
  // Window length; 0 = model context.
  uint32_t window = 0;
};

// Positions of the state contributing activations under a selector.
std::vector<std::size_t> select_positions(const MaskedState& state, Selector selector);

// Samples corpus windows, corrupts each with t ~ U(0,1), runs the model, and
// appends the layer's residual rows at the selected positions until the
// budget is reached. Window and corruption draws depend only on (seed, sample
// index), never on the selector, so mask/unmask harvests from one seed
// partition positions exactly.
ActivationStore harvest(const DlmParams& dlm, const std::string& corpus_text,
                        const HarvestConfig& config, uint64_t seed);

}  // namespace diffsae
