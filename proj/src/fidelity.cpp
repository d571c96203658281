#include "diffsae/fidelity.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "diffsae/decode.hpp"
#include "diffsae/harvest.hpp"
#include "diffsae/io.hpp"

namespace diffsae {

std::string protocol_name(EvalProtocol p) {
  return p == EvalProtocol::kDenoising ? "denoising" : "rollout";
}

double explained_variance(const SaeParams& sae, const ActivationStore& store) {
  if (store.count() == 0) throw std::invalid_argument("explained_variance: empty store");
  if (store.dim != sae.input_dim)
    throw std::invalid_argument("explained_variance: store dim " + std::to_string(store.dim) +
                                " does not match SAE dim " + std::to_string(sae.input_dim));
  std::vector<double> rec_err(store.count()), rec_energy(store.count());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(store.count()); ++i) {
    const auto x = store.vector_f64(static_cast<std::size_t>(i));
    const auto x_hat = sae_reconstruct(sae, x.data());
    double e = 0.0, s = 0.0;
    for (uint32_t j = 0; j < store.dim; ++j) {
      const double d = x[j] - x_hat[j];
      e += d * d;
      s += x[j] * x[j];
    }
    rec_err[i] = e;
    rec_energy[i] = s;
  }
  double err = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < store.count(); ++i) {
    err += rec_err[i];
    energy += rec_energy[i];
  }
  if (energy == 0.0)
    throw std::invalid_argument("explained_variance: degenerate store with zero energy");
  return 1.0 - err / energy;
}

std::vector<EvalSample> make_denoising_eval_set(const DlmParams& dlm, const std::string& corpus,
                                                const EvalSetOptions& opts, uint64_t seed) {
  const std::vector<uint32_t> ids = dlm.vocab.encode(corpus);
  const std::size_t window =
      opts.window ? std::min<std::size_t>(opts.window, dlm.config.context) : dlm.config.context;
  if (ids.size() < 2) throw std::invalid_argument("eval set: corpus too small");
  const std::size_t n_samples =
      std::max<std::size_t>(1, (opts.eval_tokens + window - 1) / window);
  std::vector<EvalSample> samples(n_samples);
  const uint32_t mask_id = dlm.vocab.mask_id();
  for (std::size_t s = 0; s < n_samples; ++s) {
    Rng window_rng(substream_seed(seed, "eval-window", s));
    Rng corruption_rng(substream_seed(seed, "eval-corruption", s));
    if (ids.size() <= window) {
      samples[s].x0 = ids;
    } else {
      const std::size_t start = static_cast<std::size_t>(window_rng.below(ids.size() - window + 1));
      samples[s].x0.assign(ids.begin() + start, ids.begin() + start + window);
    }
    samples[s].state = draw_corruption(samples[s].x0, corruption_rng, mask_id).state;
  }
  return samples;
}

std::vector<EvalSample> make_rollout_eval_set(const DlmParams& dlm,
                                              const std::vector<InstructionRecord>& prompts,
                                              const RolloutOptions& opts, uint64_t seed) {
  if (prompts.empty()) throw std::invalid_argument("rollout eval set: no prompts");
  const uint32_t mask_id = dlm.vocab.mask_id();
  std::vector<EvalSample> samples;
  samples.reserve(opts.prompts);
  for (std::size_t s = 0; s < opts.prompts; ++s) {
    Rng pick_rng(substream_seed(seed, "rollout-pick", s));
    const auto& rec = prompts[pick_rng.below(prompts.size())];
    std::vector<uint32_t> prompt_ids = dlm.vocab.encode(rec.prompt + "\n");
    const std::size_t ctx = dlm.config.context;
    if (prompt_ids.size() + opts.gen_len > ctx)
      prompt_ids.resize(ctx - opts.gen_len);
    if (prompt_ids.empty()) throw std::invalid_argument("rollout eval set: prompt too short");
    GenerateOptions gen_opts;
    gen_opts.strategy = DecodeStrategy::kEntropy;
    GenerateResult gen =
        generate(dlm, prompt_ids, opts.gen_len, opts.steps, gen_opts,
                 substream_seed(seed, "rollout-gen", s));
    EvalSample sample;
    sample.x0 = gen.ids;
    Rng corruption_rng(substream_seed(seed, "rollout-corruption", s));
    sample.state = draw_corruption(sample.x0, corruption_rng, mask_id, prompt_ids.size(),
                                   sample.x0.size())
                       .state;
    samples.push_back(std::move(sample));
  }
  return samples;
}

double eval_masked_loss(const DlmParams& dlm, const std::vector<EvalSample>& samples,
                        const ResidualHook* hook) {
  if (samples.empty()) throw std::invalid_argument("eval_masked_loss: empty eval set");
  ag::NoGradGuard no_grad;
  std::vector<double> losses(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (long long s = 0; s < static_cast<long long>(samples.size()); ++s) {
    const EvalSample& sample = samples[s];
    ForwardResult fwd = dlm_forward(dlm, sample.state, hook);
    std::vector<double> weights(sample.x0.size(), 0.0);
    for (std::size_t i = 0; i < sample.x0.size(); ++i)
      if (sample.state.masked[i]) weights[i] = 1.0 / sample.state.rate;
    losses[s] = ag::softmax_xent(fwd.logits, sample.x0, weights).item();
  }
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(samples.size());
}

ResidualHook make_sae_splice_hook(const SaeParams& sae, uint32_t layer) {
  ResidualHook hook;
  hook.layer = layer;
  hook.apply = [&sae](Tensor& x, const MaskedState&) {
    const std::size_t n = x.rows(), d = x.cols();
    for (std::size_t i = 0; i < n; ++i) {
      const auto recon = sae_reconstruct(sae, x.ptr() + i * d);
      std::copy(recon.begin(), recon.end(), x.ptr() + i * d);
    }
  };
  return hook;
}

ResidualHook make_identity_splice_hook(uint32_t layer) {
  ResidualHook hook;
  hook.layer = layer;
  hook.apply = [](Tensor& x, const MaskedState&) {
    const std::size_t n = x.numel();
    std::vector<double> copy(x.ptr(), x.ptr() + n);
    std::copy(copy.begin(), copy.end(), x.ptr());
  };
  return hook;
}

double delta_dlm_loss(const DlmParams& dlm, const SaeParams& sae, uint32_t layer,
                      const std::vector<EvalSample>& samples) {
  if (layer >= dlm.config.layers)
    throw std::invalid_argument("delta_dlm_loss: layer " + std::to_string(layer) +
                                " not in a " + std::to_string(dlm.config.layers) + "-layer model");
  if (sae.input_dim != dlm.config.dim)
    throw std::invalid_argument("delta_dlm_loss: SAE dim " + std::to_string(sae.input_dim) +
                                " does not match model dim " + std::to_string(dlm.config.dim));
  const double base = eval_masked_loss(dlm, samples);
  const ResidualHook hook = make_sae_splice_hook(sae, layer);
  const double spliced = eval_masked_loss(dlm, samples, &hook);
  return spliced - base;
}

std::string sae_display_id(const SaeParams& sae) {
  return sae.backbone_id + "/L" + std::to_string(sae.layer) + "/" + selector_name(sae.selector) +
         "/k" + std::to_string(sae.k_act);
}

namespace {

std::vector<FidelityRecord> run_eval(const DlmParams& dlm, const std::vector<SaeParams>& saes,
                                     const std::string& eval_corpus,
                                     const std::vector<InstructionRecord>& rollout_prompts,
                                     EvalProtocol protocol, const SweepOptions& opts,
                                     uint64_t seed) {
  if (saes.empty()) throw std::invalid_argument("fidelity eval: empty SAE grid");

  std::vector<EvalSample> samples;
  if (protocol == EvalProtocol::kDenoising) {
    samples = make_denoising_eval_set(dlm, eval_corpus, opts.eval, seed);
  } else {
    RolloutOptions ro;
    samples = make_rollout_eval_set(dlm, rollout_prompts, ro, seed);
  }
  uint64_t token_count = 0;
  for (const auto& s : samples) token_count += s.x0.size();

  const double base_loss = eval_masked_loss(dlm, samples);

  // EV stores per (layer, selector), harvested once from this backbone.
  std::map<std::pair<uint32_t, Selector>, ActivationStore> stores;
  for (const auto& sae : saes) {
    const auto key = std::make_pair(sae.layer, sae.selector);
    if (stores.count(key)) continue;
    HarvestConfig hc;
    hc.layer = sae.layer;
    hc.selector = sae.selector;
    hc.budget = opts.store_budget;
    stores.emplace(key, harvest(dlm, eval_corpus, hc, substream_seed(seed, "ev-store", sae.layer)));
  }

  std::vector<FidelityRecord> records;
  records.reserve(saes.size());
  for (const auto& sae : saes) {
    FidelityRecord rec;
    rec.backbone_id = dlm.backbone_id;
    rec.sae_id = sae_display_id(sae);
    rec.layer = sae.layer;
    rec.k_act = sae.k_act;
    rec.ev = explained_variance(sae, stores.at({sae.layer, sae.selector}));
    const ResidualHook hook = make_sae_splice_hook(sae, sae.layer);
    rec.delta_loss = eval_masked_loss(dlm, samples, &hook) - base_loss;
    rec.eval_tokens = token_count;
    rec.protocol = protocol_name(protocol);
    rec.seed = seed;
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace

std::vector<FidelityRecord> sparsity_sweep(const DlmParams& dlm,
                                           const std::vector<SaeParams>& saes,
                                           const std::string& eval_corpus,
                                           const SweepOptions& opts, uint64_t seed) {
  return run_eval(dlm, saes, eval_corpus, {}, EvalProtocol::kDenoising, opts, seed);
}

std::vector<FidelityRecord> transfer_eval(const DlmParams& target,
                                          const std::vector<SaeParams>& saes,
                                          const std::string& eval_corpus,
                                          const std::vector<InstructionRecord>& rollout_prompts,
                                          EvalProtocol protocol, const SweepOptions& opts,
                                          uint64_t seed) {
  return run_eval(target, saes, eval_corpus, rollout_prompts, protocol, opts, seed);
}

void write_fidelity_csv(const std::vector<FidelityRecord>& records, const std::string& path) {
  io::CsvWriter csv(path);
  csv.row({"backbone", "sae", "layer", "k_act", "ev", "delta_loss", "protocol", "tokens", "seed"});
  for (const auto& r : records)
    csv.row({r.backbone_id, r.sae_id, std::to_string(r.layer), std::to_string(r.k_act),
             io::fmt_double(r.ev), io::fmt_double(r.delta_loss), r.protocol,
             std::to_string(r.eval_tokens), std::to_string(r.seed)});
  csv.close();
}

void write_fidelity_json(const std::vector<FidelityRecord>& records, const std::string& path) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records) {
    rows.push_back({{"backbone", r.backbone_id},
                    {"sae", r.sae_id},
                    {"layer", r.layer},
                    {"k_act", r.k_act},
                    {"ev", r.ev},
                    {"delta_loss", r.delta_loss},
                    {"protocol", r.protocol},
                    {"tokens", r.eval_tokens},
                    {"seed", r.seed}});
  }
  io::write_text_file(path, rows.dump(2) + "\n");
}

}  // namespace diffsae
