#include "diffsae/steering.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "diffsae/io.hpp"

namespace diffsae {

std::string token_scope_name(TokenScope s) {
  switch (s) {
    case TokenScope::kAllTokens: return "all";
    case TokenScope::kUpdateTokens: return "update";
    case TokenScope::kTopKPositions: return "topk";
  }
  throw std::logic_error("unknown token scope");
}

TokenScope token_scope_from_name(const std::string& name, uint32_t* k_pos) {
  if (name == "all") return TokenScope::kAllTokens;
  if (name == "update") return TokenScope::kUpdateTokens;
  if (name.rfind("topk:", 0) == 0) {
    const uint32_t k = static_cast<uint32_t>(std::stoul(name.substr(5)));
    if (k == 0) throw std::invalid_argument("token scope topk needs a positive position count");
    if (k_pos) *k_pos = k;
    return TokenScope::kTopKPositions;
  }
  throw std::invalid_argument("unknown token scope: " + name +
                              " (expected all, update, or topk:<n>)");
}

std::vector<uint8_t> steer_selector(const Tensor& x, const SteeringSpec& spec,
                                    const SaeParams& sae, const MaskedState& state) {
  const std::size_t n = x.rows();
  if (state.masked.size() != n)
    throw std::invalid_argument("steer_selector: state length does not match residual rows");
  std::vector<uint8_t> sel(n, 0);
  switch (spec.scope) {
    case TokenScope::kAllTokens:
      std::fill(sel.begin(), sel.end(), 1);
      break;
    case TokenScope::kUpdateTokens:
      for (std::size_t i = 0; i < n; ++i) sel[i] = state.masked[i];
      break;
    case TokenScope::kTopKPositions: {
      std::size_t k = spec.k_pos;
      if (k > n) {
        std::fprintf(stderr, "steer: top-k positions %zu clamped to sequence length %zu\n", k, n);
        k = n;
      }
      if (k == 0) break;
      const std::size_t d = x.cols();
      std::vector<double> act(n);
      for (std::size_t i = 0; i < n; ++i)
        act[i] = sae_encode(sae, x.ptr() + i * d).values[spec.feature];
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<long>(k), order.end(),
                        [&act](std::size_t a, std::size_t b) {
                          if (act[a] != act[b]) return act[a] > act[b];
                          return a < b;
                        });
      for (std::size_t i = 0; i < k; ++i) sel[order[i]] = 1;
      break;
    }
  }
  return sel;
}

void steer_rows(Tensor& x, const SteeringSpec& spec, const SaeParams& sae,
                const MaskedState& state) {
  if (spec.feature >= sae.width)
    throw std::invalid_argument("steer: feature " + std::to_string(spec.feature) +
                                " out of width " + std::to_string(sae.width));
  if (x.cols() != sae.input_dim)
    throw std::invalid_argument("steer: residual width does not match SAE dim");
  const double net = spec.alpha * spec.m_f;
  if (net == 0.0) return;  // bit-identical no-op
  const auto sel = steer_selector(x, spec, sae, state);
  const auto atom = sae.decoder_atom(spec.feature);
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (!sel[i]) continue;
    double* row = x.ptr() + i * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += net * atom[j];
  }
}

ResidualHook make_steer_hook(const SteeringSpec& spec, const SaeParams& sae,
                             std::size_t* fire_count) {
  ResidualHook hook;
  hook.layer = spec.layer;
  hook.apply = [spec, &sae, fire_count](Tensor& x, const MaskedState& state) {
    if (fire_count) ++*fire_count;
    steer_rows(x, spec, sae, state);
  };
  return hook;
}

std::vector<double> calibrate_m_f_batch(const SaeParams& sae, const ActivationStore& store,
                                        const std::vector<uint32_t>& features) {
  if (store.count() == 0) throw std::invalid_argument("calibrate_m_f: empty store");
  std::vector<std::vector<double>> nonzero(features.size());
  for (std::size_t i = 0; i < store.count(); ++i) {
    const auto x = store.vector_f64(i);
    const SaeLatents h = sae_encode(sae, x);
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
      const double v = h.values[features[fi]];
      if (v > 0.0) nonzero[fi].push_back(v);
    }
  }
  std::vector<double> out(features.size(), 0.0);
  for (std::size_t fi = 0; fi < features.size(); ++fi) {
    auto& vals = nonzero[fi];
    if (vals.empty()) {
      std::fprintf(stderr,
                   "calibrate_m_f: feature %u never activates on the store; steering will be a "
                   "no-op\n",
                   features[fi]);
      continue;
    }
    std::sort(vals.begin(), vals.end());
    // Nearest-rank 99th percentile.
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(0.99 * static_cast<double>(vals.size())));
    out[fi] = vals[std::max<std::size_t>(rank, 1) - 1];
  }
  return out;
}

double calibrate_m_f(const SaeParams& sae, const ActivationStore& store, uint32_t feature) {
  return calibrate_m_f_batch(sae, store, {feature})[0];
}

double pseudo_perplexity(const DlmParams& dlm, const std::vector<uint32_t>& ids,
                         std::size_t eval_begin, std::size_t eval_end) {
  if (eval_end <= eval_begin)
    throw std::invalid_argument("pseudo_perplexity: empty evaluation span");
  if (eval_end > ids.size()) throw std::invalid_argument("pseudo_perplexity: span out of range");
  ag::NoGradGuard no_grad;
  const uint32_t mask_id = dlm.vocab.mask_id();
  const std::size_t n = eval_end - eval_begin;
  std::vector<double> ce(n);
#pragma omp parallel for schedule(dynamic)
  for (long long off = 0; off < static_cast<long long>(n); ++off) {
    const std::size_t pos = eval_begin + static_cast<std::size_t>(off);
    MaskedState state = MaskedState::clean(ids);
    state.ids[pos] = mask_id;
    state.masked[pos] = 1;
    state.rate = 1.0 / static_cast<double>(ids.size());
    ForwardResult fwd = dlm_forward(dlm, state);
    std::vector<double> weights(ids.size(), 0.0);
    weights[pos] = 1.0;
    ce[off] = ag::softmax_xent(fwd.logits, ids, weights).item();
  }
  double mean = 0.0;
  for (double c : ce) mean += c;
  mean /= static_cast<double>(n);
  return std::exp(mean);
}

LexiconScorer::LexiconScorer(std::vector<std::string> terms) : terms_(std::move(terms)) {
  if (terms_.empty()) throw std::invalid_argument("lexicon scorer needs at least one term");
}

double LexiconScorer::score(const std::string& text) {
  double hits = 0.0;
  for (const auto& term : terms_) {
    if (term.empty()) continue;
    std::size_t pos = 0;
    while ((pos = text.find(term, pos)) != std::string::npos) {
      hits += 1.0;
      pos += term.size();
    }
  }
  return hits;
}

JudgeConceptScorer::JudgeConceptScorer(JudgeClient& judge, std::string concept_description)
    : judge_(judge), concept_(std::move(concept_description)) {}

double JudgeConceptScorer::score(const std::string& text) {
  const std::string system =
      "You rate how strongly a text expresses a concept. Reply with a single integer from 0 to "
      "100 and nothing else.";
  const std::string reply = judge_.complete(system, "Concept: " + concept_ + "\nText: " + text);
  std::size_t value = 0;
  bool any = false;
  for (char c : reply) {
    if (c >= '0' && c <= '9') {
      value = value * 10 + static_cast<std::size_t>(c - '0');
      any = true;
    } else if (any) {
      break;
    }
  }
  if (!any) throw std::runtime_error("judge concept scorer: unparseable rating: " + reply);
  return static_cast<double>(std::min<std::size_t>(value, 100));
}

double steering_score(double c, double p, double lambda) { return c + lambda * p; }

std::vector<SteeringOutcome> steering_eval(const DlmParams& dlm, const SaeParams& sae,
                                           const std::vector<uint32_t>& features,
                                           const std::vector<std::string>& prefix_pool,
                                           ConceptScorer& scorer, const SteeringSpec& spec_template,
                                           const SteeringEvalOptions& opts,
                                           const ActivationStore* calibration_store,
                                           uint64_t seed) {
  if (features.empty()) throw std::invalid_argument("steering_eval: no features");
  if (prefix_pool.empty()) throw std::invalid_argument("steering_eval: empty prefix pool");

  // One prefix draw per run, shared by every feature.
  std::vector<std::string> prefixes = prefix_pool;
  Rng prefix_rng(substream_seed(seed, "prefix-pick"));
  prefix_rng.shuffle(prefixes);
  if (prefixes.size() > opts.n_prefix) prefixes.resize(opts.n_prefix);

  std::vector<double> m_f(features.size(), spec_template.m_f);
  if (calibration_store) m_f = calibrate_m_f_batch(sae, *calibration_store, features);

  std::vector<SteeringOutcome> outcomes;
  outcomes.reserve(features.size());
  for (std::size_t fi = 0; fi < features.size(); ++fi) {
    SteeringSpec spec = spec_template;
    spec.feature = features[fi];
    spec.m_f = m_f[fi];
    const ResidualHook hook = make_steer_hook(spec, sae);

    SteeringOutcome outcome;
    outcome.feature = spec.feature;
    double cb = 0.0, ca = 0.0, pb = 0.0, pa = 0.0;
    std::size_t used = 0;
    for (std::size_t pi = 0; pi < prefixes.size(); ++pi) {
      const std::string& prefix = prefixes[pi];
      std::vector<uint32_t> prompt = dlm.vocab.encode(prefix);
      const std::size_t ctx = dlm.config.context;
      std::size_t gen_len = opts.max_new_tokens;
      if (prompt.size() + gen_len > ctx) {
        if (gen_len + 1 > ctx) gen_len = ctx - 1;
        prompt.resize(ctx - gen_len);
      }
      if (prompt.empty()) continue;
      const uint64_t gen_seed = substream_seed(seed, "steer-gen", pi);
      GenerateOptions gen_opts;
      gen_opts.strategy = opts.strategy;
      GenerateResult before = generate(dlm, prompt, gen_len, opts.dlm_steps, gen_opts, gen_seed);
      gen_opts.hook = &hook;
      GenerateResult after = generate(dlm, prompt, gen_len, opts.dlm_steps, gen_opts, gen_seed);

      const auto continuation = [&](const GenerateResult& r) {
        std::vector<uint32_t> tail(r.ids.begin() + prompt.size(), r.ids.end());
        return dlm.vocab.decode(tail);
      };
      PrefixScore ps;
      ps.prefix = prefix;
      try {
        ps.concept_before = scorer.score(continuation(before));
        ps.concept_after = scorer.score(continuation(after));
      } catch (const std::exception& e) {
        std::fprintf(stderr, "steering_eval: scorer failed on feature %u prefix %zu: %s\n",
                     spec.feature, pi, e.what());
        continue;
      }
      ps.ppl_before = pseudo_perplexity(dlm, before.ids, prompt.size(), before.ids.size());
      ps.ppl_after = pseudo_perplexity(dlm, after.ids, prompt.size(), after.ids.size());
      cb += ps.concept_before;
      ca += ps.concept_after;
      pb += ps.ppl_before;
      pa += ps.ppl_after;
      outcome.per_prefix.push_back(std::move(ps));
      ++used;
    }
    if (used == 0)
      throw std::runtime_error("steering_eval: every prefix failed for feature " +
                               std::to_string(spec.feature));
    const double inv = 1.0 / static_cast<double>(used);
    cb *= inv;
    ca *= inv;
    pb *= inv;
    pa *= inv;
    outcome.c = (ca - cb) / scorer.scale();
    outcome.p = (pb - pa) / pb;
    outcome.s = steering_score(outcome.c, outcome.p, opts.lambda);
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

std::vector<std::string> load_prefix_pool(const std::string& path) {
  std::istringstream in(io::read_text_file(path));
  std::vector<std::string> prefixes;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) prefixes.push_back(line);
  }
  if (prefixes.empty()) throw std::runtime_error(path + ": empty prefix pool");
  return prefixes;
}

void write_steering_csv(const std::vector<SteeringOutcome>& outcomes, const SteeringSpec& spec,
                        uint64_t seed, const std::string& path) {
  io::CsvWriter csv(path);
  csv.row({"feature", "C", "P", "S", "alpha", "selector", "layer", "seed"});
  std::string scope = token_scope_name(spec.scope);
  if (spec.scope == TokenScope::kTopKPositions) scope += ":" + std::to_string(spec.k_pos);
  for (const auto& o : outcomes)
    csv.row({std::to_string(o.feature), io::fmt_double(o.c), io::fmt_double(o.p),
             io::fmt_double(o.s), io::fmt_double(spec.alpha), scope, std::to_string(spec.layer),
             std::to_string(seed)});
  csv.close();
}

}  // namespace diffsae
