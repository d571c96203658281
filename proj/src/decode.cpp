#include "diffsae/decode.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diffsae/kernels.hpp"

namespace diffsae {

NoiseSchedule NoiseSchedule::linear(std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("schedule: need at least one step");
  NoiseSchedule s;
  s.rates.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k)
    s.rates[k] = static_cast<double>(k) / static_cast<double>(steps);
  return s;
}

void NoiseSchedule::validate() const {
  if (rates.size() < 2) throw std::invalid_argument("schedule: need at least one step");
  if (rates.front() != 0.0) throw std::invalid_argument("schedule: t_0 must be 0");
  if (rates.back() > 1.0) throw std::invalid_argument("schedule: t_K must not exceed 1");
  for (std::size_t k = 1; k < rates.size(); ++k)
    if (!(rates[k] > rates[k - 1]))
      throw std::invalid_argument("schedule: rates must be strictly increasing");
}

std::string strategy_name(DecodeStrategy s) {
  switch (s) {
    case DecodeStrategy::kOrigin: return "origin";
    case DecodeStrategy::kTopKMargin: return "topk_margin";
    case DecodeStrategy::kEntropy: return "entropy";
  }
  throw std::logic_error("unknown strategy");
}

DecodeStrategy strategy_from_name(const std::string& name) {
  if (name == "origin") return DecodeStrategy::kOrigin;
  if (name == "topk_margin") return DecodeStrategy::kTopKMargin;
  if (name == "entropy") return DecodeStrategy::kEntropy;
  throw std::invalid_argument("unknown decoding strategy: " + name);
}

std::vector<std::size_t> rank_positions(const Tensor& logits,
                                        const std::vector<std::size_t>& masked_positions,
                                        DecodeStrategy strategy, Rng& rng) {
  if (masked_positions.empty())
    throw std::invalid_argument("rank_positions: no masked positions to rank");
  const std::size_t v = logits.cols();
  for (std::size_t pos : masked_positions)
    if (pos >= logits.rows())
      throw std::invalid_argument("rank_positions: position out of logits range");

  std::vector<std::size_t> order = masked_positions;
  if (strategy == DecodeStrategy::kOrigin) {
    rng.shuffle(order);
    return order;
  }

  // Per-position confidence key: larger is more confident.
  std::vector<double> key(masked_positions.size());
  std::vector<double> probs(v);
  for (std::size_t mi = 0; mi < masked_positions.size(); ++mi) {
    const double* row = logits.ptr() + masked_positions[mi] * v;
    std::copy_n(row, v, probs.data());
    kernels::softmax_rows(probs.data(), 1, v);
    if (strategy == DecodeStrategy::kTopKMargin) {
      double p1 = -1.0, p2 = -1.0;
      for (double p : probs) {
        if (p > p1) {
          p2 = p1;
          p1 = p;
        } else if (p > p2) {
          p2 = p;
        }
      }
      key[mi] = p1 - p2;
    } else {
      double h = 0.0;
      for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
      key[mi] = -h;  // low entropy first
    }
  }
  std::vector<std::size_t> idx(masked_positions.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return key[a] > key[b];
    return masked_positions[a] < masked_positions[b];
  });
  for (std::size_t i = 0; i < idx.size(); ++i) order[i] = masked_positions[idx[i]];
  return order;
}

namespace {

uint32_t predict_token(const Tensor& logits, std::size_t pos, double temperature, Rng& rng) {
  const std::size_t v = logits.cols();
  const double* row = logits.ptr() + pos * v;
  if (temperature <= 0.0) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j)
      if (row[j] > row[best]) best = j;
    return static_cast<uint32_t>(best);
  }
  std::vector<double> probs(v);
  for (std::size_t j = 0; j < v; ++j) probs[j] = row[j] / temperature;
  kernels::softmax_rows(probs.data(), 1, v);
  double u = rng.uniform01();
  for (std::size_t j = 0; j < v; ++j) {
    u -= probs[j];
    if (u < 0.0) return static_cast<uint32_t>(j);
  }
  return static_cast<uint32_t>(v - 1);
}

void record_trace_step(DecodingTrace& trace, const MaskedState& state,
                       const std::vector<Tensor>& residuals, std::size_t span_begin,
                       std::size_t span_len, const TraceConfig& cfg) {
  DecodingTrace::Step step;
  for (std::size_t i = 0; i < span_len; ++i)
    if (state.masked[span_begin + i]) step.masked.push_back(static_cast<uint32_t>(i));
  const std::size_t d = residuals.front().cols();
  step.sets.resize(cfg.layers.size());
  step.top1.resize(cfg.layers.size());
  for (std::size_t li = 0; li < cfg.layers.size(); ++li) {
    const uint32_t layer = cfg.layers[li];
    if (layer >= residuals.size())
      throw std::invalid_argument("trace: layer " + std::to_string(layer) + " not in model");
    step.sets[li].resize(span_len);
    step.top1[li].assign(span_len, -1);
    for (std::size_t i = 0; i < span_len; ++i) {
      auto [set, top1] = cfg.probe(layer, residuals[layer].ptr() + (span_begin + i) * d);
      if (set.size() > cfg.k_feat) set.resize(cfg.k_feat);
      step.top1[li][i] = set.empty() ? -1 : top1;
      step.sets[li][i] = std::move(set);
    }
  }
  trace.step_records.push_back(std::move(step));
}

}  // namespace

MaskedState denoise_step(const MaskedState& state, const DlmParams& params,
                         const NoiseSchedule& schedule, std::size_t k, std::size_t span_begin,
                         std::size_t span_len, const GenerateOptions& opts, Rng& rng,
                         DecodingTrace* trace_out) {
  if (k < 1 || k > schedule.steps())
    throw std::out_of_range("denoise_step: schedule exhausted at step index " + std::to_string(k));
  ag::NoGradGuard no_grad;

  ForwardResult fwd = dlm_forward(params, state, opts.hook);
  if (trace_out && opts.trace)
    record_trace_step(*trace_out, state, fwd.residuals, span_begin, span_len, *opts.trace);

  const auto masked = state.masked_positions();
  const std::size_t target_masked = static_cast<std::size_t>(
      std::llround(schedule.rates[k - 1] * static_cast<double>(span_len)));
  if (masked.empty() || target_masked >= masked.size()) return state;

  const std::size_t commit_count = masked.size() - target_masked;
  const std::vector<std::size_t> ranked = rank_positions(fwd.logits, masked, opts.strategy, rng);

  MaskedState next = state;
  next.rate = schedule.rates[k - 1];
  for (std::size_t i = 0; i < commit_count; ++i) {
    const std::size_t pos = ranked[i];
    next.ids[pos] = predict_token(fwd.logits, pos, opts.temperature, rng);
    next.masked[pos] = 0;
  }
  return next;
}

GenerateResult generate(const DlmParams& params, const std::vector<uint32_t>& prompt,
                        std::size_t gen_len, std::size_t steps, const GenerateOptions& opts,
                        uint64_t seed) {
  if (gen_len == 0) throw std::invalid_argument("generate: generation length must be positive");
  if (prompt.size() + gen_len > params.config.context)
    throw std::invalid_argument("generate: prompt plus generation length " +
                                std::to_string(prompt.size() + gen_len) + " exceeds context " +
                                std::to_string(params.config.context));
  const NoiseSchedule schedule = NoiseSchedule::linear(steps);

  MaskedState state;
  state.ids = prompt;
  state.ids.resize(prompt.size() + gen_len, params.vocab.mask_id());
  state.masked.assign(prompt.size() + gen_len, 0);
  for (std::size_t i = prompt.size(); i < state.ids.size(); ++i) state.masked[i] = 1;
  state.rate = schedule.rates.back();

  GenerateResult result;
  if (opts.trace) {
    result.trace.strategy = strategy_name(opts.strategy);
    result.trace.steps = static_cast<uint32_t>(steps);
    result.trace.positions = static_cast<uint32_t>(gen_len);
    result.trace.layers = opts.trace->layers;
    result.trace.k_feat = opts.trace->k_feat;
  }

  Rng rng(substream_seed(seed, "decode"));
  for (std::size_t k = steps; k >= 1; --k) {
    state = denoise_step(state, params, schedule, k, prompt.size(), gen_len, opts, rng,
                         opts.trace ? &result.trace : nullptr);
  }
  if (state.masked_count() != 0) throw std::logic_error("generate: positions left masked");
  if (opts.trace) result.trace.validate();
  result.ids = state.ids;
  return result;
}

}  // namespace diffsae
