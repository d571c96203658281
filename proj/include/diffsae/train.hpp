#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffsae/dlm.hpp"
#include "diffsae/tensor.hpp"

namespace diffsae {

// Adam over a flat view of named parameter tensors. Updates are elementwise
// and applied in a fixed parameter order, so results do not depend on how the
// gradient evaluation was parallelized.
class AdamOptimizer {
 public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  AdamOptimizer(std::vector<Tensor*> params, Config config);

  // grads[i] must match params[i] in size.
  void step(const std::vector<const std::vector<double>*>& grads);
  const Config& config() const { return config_; }

 private:
  std::vector<Tensor*> params_;
  Config config_;
  std::vector<std::vector<double>> m_, v_;
  uint64_t t_ = 0;
};

struct TrainConfig {
  uint64_t steps = 2000;
  uint32_t batch = 16;
  AdamOptimizer::Config adam;
  // Training windows use the model context unless shortened here.
  uint32_t window = 0;
};

struct TrainResult {
  std::vector<double> loss_curve;  // per-step batch loss
};

// Masked-token denoising training on a plain-text corpus. Deterministic per
// seed regardless of thread count.
TrainResult train_dlm(DlmParams& params, const std::string& corpus_text, const TrainConfig& config,
                      uint64_t seed);

struct InstructionRecord {
  std::string prompt;
  std::string response;
};

std::vector<InstructionRecord> load_instruction_corpus(const std::string& path);

// prompt and response are joined with '\n'; the response span alone is
// corrupted and scored.
std::string format_instruction(const InstructionRecord& rec);

// Continues training `params` on prompt/response pairs; corruption and loss
// are restricted to the response span.
TrainResult finetune_dlm(DlmParams& params, const std::vector<InstructionRecord>& corpus,
                         const TrainConfig& config, uint64_t seed);

// Evaluation analogue of the fine-tune objective (response-span loss).
double instruction_loss(const DlmParams& params, const std::vector<InstructionRecord>& corpus,
                        uint64_t seed, std::size_t samples);

}  // namespace diffsae
