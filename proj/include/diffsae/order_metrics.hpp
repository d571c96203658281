#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "diffsae/trace.hpp"

namespace diffsae {

// |A ∩ B| / |A ∪ B|; two empty sets count as identical (similarity 1).
double jaccard(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b);

// Consecutive-step Top-K_feat Jaccard for a position still masked at step k
// (k >= 1): J(set_{k}, set_{k-1}).
struct PremaskValue {
  std::size_t layer_index;  // index into trace.layers
  uint32_t step;            // k
  uint32_t position;
  double value;
};
std::vector<PremaskValue> premask_stability(const DecodingTrace& trace, uint32_t k_feat);

// Average drift after a position's decode step k_i = min{k : i not masked at k}:
// mean over k in (k_i, K-1] of (1 - similarity at k). Positions whose
// averaging window is empty are excluded.
struct DriftValue {
  std::size_t layer_index;
  uint32_t position;
  uint32_t decode_step;  // k_i
  double drift;          // D^post
  std::vector<double> similarity_series;  // similarity at k_i+1 .. K-1
};
std::vector<DriftValue> postdecode_drift(const DecodingTrace& trace, uint32_t k_feat);

// Fraction of step-k masked positions whose top-1 latent equals step k-1's.
// Steps with no masked positions produce no entry.
struct LockRateValue {
  std::size_t layer_index;
  uint32_t step;
  double rate;
};
std::vector<LockRateValue> top1_lock_rate(const DecodingTrace& trace);

// Number of step-k decoded positions whose top-1 latent changed since k-1.
struct FlipCountValue {
  std::size_t layer_index;
  uint32_t step;
  std::size_t decoded;  // |U| at step k
  std::size_t flips;
};
std::vector<FlipCountValue> top1_flip_count(const DecodingTrace& trace);

// Layer x step grids (absent cells where a metric is undefined) plus
// tau-binned curves, averaged over traces of one strategy.
struct OrderMetricsSummary {
  std::string strategy;
  std::vector<uint32_t> layers;
  uint32_t steps = 0;     // K of the widest trace
  uint32_t tau_bins = 20;

  struct Grid {
    // [layer][step]; nullopt = undefined
    std::vector<std::vector<std::optional<double>>> cells;
  };
  Grid premask_mean;        // mean S^pre
  Grid postdecode_mean;     // mean post-decode similarity
  Grid lock_rate;           // R^pre
  Grid flip_count;          // mean F^post
  std::vector<std::optional<double>> premask_tau;     // tau-binned mean S^pre
  std::vector<std::optional<double>> postdecode_tau;  // tau-binned mean drift (1 - sim)
  // Per layer: D^post averaged over positions and traces.
  std::vector<double> drift_by_layer;
};

OrderMetricsSummary summarize(const std::vector<DecodingTrace>& traces, uint32_t k_feat,
                              uint32_t tau_bins = 20);

// One CSV per metric with columns (layer, step, tau, value, strategy).
void write_summary_csvs(const OrderMetricsSummary& summary, const std::string& out_dir);

}  // namespace diffsae
