#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace diffsae {

// Per-generation record of feature dynamics: for each denoising step (indexed
// 0..steps-1, in forward order), the masked positions of the state that step's
// forward pass saw, and per tracked layer and span position the strongest
// latent indices. Sets are stored in descending-magnitude rank order so a
// smaller feature budget is a prefix; top1 is the first element (-1 if the
// latent vector was all zero).
struct DecodingTrace {
  std::string strategy;
  uint32_t steps = 0;    // K
  uint32_t positions = 0;  // span length N
  std::vector<uint32_t> layers;
  uint32_t k_feat = 0;

  struct Step {
    std::vector<uint32_t> masked;  // sorted span-relative positions
    // [layer][position] -> rank-ordered latent indices / top-1 index
    std::vector<std::vector<std::vector<uint32_t>>> sets;
    std::vector<std::vector<int64_t>> top1;
  };
  std::vector<Step> step_records;

  // Monotone masked sets, set sizes within k_feat, top1 consistency.
  void validate() const;

  void save(const std::string& path) const;
  static DecodingTrace load(const std::string& path);
};

}  // namespace diffsae
