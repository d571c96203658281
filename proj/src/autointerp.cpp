#include "diffsae/autointerp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "diffsae/io.hpp"

namespace diffsae {

EvidenceIndex::EvidenceIndex(const DlmParams& dlm, const SaeParams& sae,
                             const std::string& corpus, const AutointerpConfig& config)
    : dlm_(dlm), sae_(sae), config_(config) {
  if (sae.input_dim != dlm.config.dim)
    throw std::invalid_argument("evidence index: SAE dim does not match model dim");
  if (sae.layer >= dlm.config.layers)
    throw std::invalid_argument("evidence index: SAE layer not present in model");
  std::vector<uint32_t> ids = dlm.vocab.encode(corpus);
  if (ids.size() > config.max_tokens) ids.resize(config.max_tokens);
  const std::size_t window = std::min<std::size_t>(
      std::min<std::size_t>(config.context_length, dlm.config.context), ids.size());
  if (window < 2) throw std::invalid_argument("evidence index: corpus too small");
  for (std::size_t start = 0; start + window <= ids.size(); start += window)
    windows_.emplace_back(ids.begin() + start, ids.begin() + start + window);
  if (windows_.empty()) windows_.emplace_back(ids);
  scan();
}

void EvidenceIndex::scan() {
  const std::size_t n_windows = windows_.size();
  const std::size_t d = dlm_.config.dim;
  latent_cache_.resize(n_windows);
  counts_.assign(sae_.width, 0);

  ag::NoGradGuard no_grad;
#pragma omp parallel for schedule(dynamic)
  for (long long w = 0; w < static_cast<long long>(n_windows); ++w) {
    const auto& ids = windows_[w];
    MaskedState state = MaskedState::clean(ids);
    ForwardResult fwd = dlm_forward(dlm_, state);
    const Tensor& res = fwd.residuals[sae_.layer];
    auto& cache = latent_cache_[w];
    cache.resize(ids.size());
    for (std::size_t pos = 0; pos < ids.size(); ++pos) {
      const SaeLatents h = sae_encode(sae_, res.ptr() + pos * d);
      for (uint32_t f : h.active)
        if (h.values[f] > config_.activation_threshold)
          cache[pos].emplace_back(f, static_cast<float>(h.values[f]));
    }
  }

  per_feature_.assign(sae_.width, {});
  std::vector<float> window_peak(sae_.width);
  for (std::size_t w = 0; w < n_windows; ++w) {
    std::fill(window_peak.begin(), window_peak.end(), 0.0f);
    for (const auto& pos_pairs : latent_cache_[w])
      for (const auto& [f, v] : pos_pairs) {
        ++counts_[f];
        window_peak[f] = std::max(window_peak[f], v);
      }
    for (uint32_t f = 0; f < sae_.width; ++f)
      if (window_peak[f] > 0.0f)
        per_feature_[f].push_back({static_cast<uint32_t>(w), static_cast<double>(window_peak[f])});
  }
  for (auto& list : per_feature_)
    std::sort(list.begin(), list.end(), [](const WindowPeak& a, const WindowPeak& b) {
      if (a.peak != b.peak) return a.peak > b.peak;
      return a.window_id < b.window_id;
    });
}

std::size_t EvidenceIndex::activation_count(uint32_t feature) const {
  if (feature >= counts_.size()) throw std::out_of_range("feature out of range");
  return counts_[feature];
}

bool EvidenceIndex::is_dead(uint32_t feature) const {
  return activation_count(feature) < config_.dead_latent_threshold;
}

std::vector<double> EvidenceIndex::feature_activations(uint32_t window_id, uint32_t feature) {
  const auto& cache = latent_cache_.at(window_id);
  std::vector<double> acts(windows_[window_id].size(), 0.0);
  for (std::size_t pos = 0; pos < cache.size(); ++pos)
    for (const auto& [f, v] : cache[pos])
      if (f == feature) acts[pos] = static_cast<double>(v);
  return acts;
}

std::vector<std::string> EvidenceIndex::window_tokens(uint32_t window_id) const {
  const auto& ids = windows_.at(window_id);
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (uint32_t id : ids) tokens.push_back(dlm_.vocab.token_text(id));
  return tokens;
}

const std::vector<EvidenceIndex::WindowPeak>& EvidenceIndex::active_windows(uint32_t feature) const {
  return per_feature_.at(feature);
}

namespace {

EvidenceWindow make_window(EvidenceIndex& index, uint32_t window_id, uint32_t feature,
                           EvidenceWindow::Label label) {
  EvidenceWindow w;
  w.window_id = window_id;
  w.tokens = index.window_tokens(window_id);
  w.activations = index.feature_activations(window_id, feature);
  w.label = label;
  w.peak_pos = 0;
  w.peak_value = 0.0;
  for (std::size_t i = 0; i < w.activations.size(); ++i)
    if (w.activations[i] > w.peak_value) {
      w.peak_value = w.activations[i];
      w.peak_pos = i;
    }
  return w;
}

// Weighted sample without replacement (weights must be positive).
std::vector<std::size_t> weighted_sample(const std::vector<double>& weights, std::size_t k,
                                         Rng& rng) {
  std::vector<std::size_t> pool(weights.size());
  std::vector<double> w = weights;
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  std::vector<std::size_t> picked;
  while (picked.size() < k && !pool.empty()) {
    double total = 0.0;
    for (std::size_t i = 0; i < pool.size(); ++i) total += w[i];
    double r = rng.uniform01() * total;
    std::size_t chosen = pool.size() - 1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      r -= w[i];
      if (r < 0.0) {
        chosen = i;
        break;
      }
    }
    picked.push_back(pool[chosen]);
    pool.erase(pool.begin() + static_cast<long>(chosen));
    w.erase(w.begin() + static_cast<long>(chosen));
  }
  return picked;
}

}  // namespace

std::optional<Evidence> build_evidence(EvidenceIndex& index, uint32_t feature, Rng& rng) {
  const auto& cfg = index.config();
  const auto& active = index.active_windows(feature);
  if (active.empty() || index.is_dead(feature)) return std::nullopt;

  Evidence ev;
  ev.feature = feature;

  const std::size_t n_gen = std::min<std::size_t>(cfg.n_top_windows, active.size());
  for (std::size_t i = 0; i < n_gen; ++i)
    ev.generation.push_back(
        make_window(index, active[i].window_id, feature, EvidenceWindow::Label::kTopActivating));

  // Scoring actives: importance-weighted draw from the non-top region, topped
  // up from the top windows when the pool runs short.
  const std::size_t want_active =
      std::max<std::size_t>(1, std::min<std::size_t>(cfg.n_scoring / 3, active.size()));
  std::vector<EvidenceWindow> actives;
  {
    std::vector<double> weights;
    for (std::size_t i = n_gen; i < active.size(); ++i) weights.push_back(active[i].peak);
    const auto picked = weighted_sample(weights, want_active, rng);
    for (std::size_t pi : picked)
      actives.push_back(make_window(index, active[n_gen + pi].window_id, feature,
                                    EvidenceWindow::Label::kImportanceWeighted));
    for (std::size_t i = 0; actives.size() < want_active && i < n_gen; ++i)
      actives.push_back(
          make_window(index, active[i].window_id, feature, EvidenceWindow::Label::kTopActivating));
  }

  // Negatives: uniformly sampled windows where the feature never fires.
  std::set<uint32_t> active_ids;
  for (const auto& wp : active) active_ids.insert(wp.window_id);
  std::vector<uint32_t> negative_pool;
  for (uint32_t w = 0; w < index.window_count(); ++w)
    if (!active_ids.count(w)) negative_pool.push_back(w);
  rng.shuffle(negative_pool);

  const std::size_t want_total = cfg.n_scoring;
  std::vector<EvidenceWindow> scoring = actives;
  std::vector<bool> truth(scoring.size(), true);
  for (uint32_t w : negative_pool) {
    if (scoring.size() >= want_total) break;
    scoring.push_back(make_window(index, w, feature, EvidenceWindow::Label::kRandomNegative));
    truth.push_back(false);
  }
  // Not enough negatives: extend with further actives.
  if (scoring.size() < want_total) {
    std::set<uint32_t> used;
    for (const auto& w : scoring) used.insert(w.window_id);
    for (const auto& wp : active) {
      if (scoring.size() >= want_total) break;
      if (used.count(wp.window_id)) continue;
      scoring.push_back(
          make_window(index, wp.window_id, feature, EvidenceWindow::Label::kImportanceWeighted));
      truth.push_back(true);
      used.insert(wp.window_id);
    }
  }

  // Judge sees the examples in random order.
  std::vector<std::size_t> order(scoring.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  ev.scoring.reserve(scoring.size());
  ev.scoring_truth.reserve(scoring.size());
  for (std::size_t i : order) {
    ev.scoring.push_back(std::move(scoring[i]));
    ev.scoring_truth.push_back(truth[i]);
  }
  return ev;
}

PromptTemplates PromptTemplates::builtin() {
  PromptTemplates t;
  t.explain_system =
      "We're studying neurons in a neural network. Each neuron activates on some particular "
      "word/words/substring/concept in a short document. The activating words in each document "
      "are indicated with << ... >>. We will give you a list of documents on which the neuron "
      "activates, in order from most strongly activating to least strongly activating. Look at "
      "the parts of the document the neuron activates for and summarize in a single sentence "
      "what the neuron is activating on. Try not to be overly specific in your explanation. Note "
      "that some neurons will activate only on specific words or substrings, but others will "
      "activate on most/all words in a sentence provided that sentence contains some particular "
      "concept. Your explanation should cover most or all activating words. Pay attention to "
      "capitalization and punctuation, since they might matter.";
  t.score_system =
      "We're studying neurons in a neural network. Each neuron activates on some particular "
      "word/words/substring/concept in a short document. You will be given a short explanation "
      "of what this neuron activates for, and then be shown several example sequences in random "
      "order. You must return a comma-separated list of the examples where you think the neuron "
      "should activate at least once, on ANY of the words or substrings in the document. For "
      "example, your response might look like \"2, 9, 10, 12\". Try not to be overly specific "
      "in your interpretation of the explanation. If you think there are no examples where the "
      "neuron will activate, you should just respond with \"None\". You should include nothing "
      "else in your response other than comma-separated numbers or the word \"None\" - this is "
      "important.";
  return t;
}

PromptTemplates PromptTemplates::load(const std::string& dir) {
  PromptTemplates t;
  t.explain_system = io::read_text_file(dir + "/explain_system.txt");
  t.score_system = io::read_text_file(dir + "/score_system.txt");
  // Stored one paragraph per file with a trailing newline.
  while (!t.explain_system.empty() && t.explain_system.back() == '\n') t.explain_system.pop_back();
  while (!t.score_system.empty() && t.score_system.back() == '\n') t.score_system.pop_back();
  return t;
}

namespace {

std::string render_window_text(const EvidenceWindow& w, bool marked, double threshold) {
  std::string out;
  for (std::size_t i = 0; i < w.tokens.size(); ++i) {
    if (marked && w.activations[i] > threshold)
      out += "<<" + w.tokens[i] + ">>";
    else
      out += w.tokens[i];
  }
  return out;
}

}  // namespace

RenderedPrompt render_prompt(const std::vector<EvidenceWindow>& windows, PromptStage stage,
                             const std::string* explanation, const PromptTemplates& templates,
                             double activation_threshold) {
  if (windows.empty()) throw std::invalid_argument("render_prompt: no windows to render");
  RenderedPrompt out;
  std::string body;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    body += "\n\n" + std::to_string(i + 1) + ". " +
            render_window_text(windows[i], stage == PromptStage::kExplain, activation_threshold);
  }
  if (stage == PromptStage::kExplain) {
    out.system = templates.explain_system;
    out.user = "The activating documents are given below:" + body;
  } else {
    if (!explanation) throw std::invalid_argument("render_prompt: scoring stage needs an explanation");
    std::string expl = *explanation;
    while (!expl.empty() && (expl.back() == '\n' || expl.back() == ' ')) expl.pop_back();
    if (!expl.empty() && expl.back() == '.') expl.pop_back();
    out.system = templates.score_system;
    out.user = "Here is the explanation: " + expl + ". Here are the examples:" + body;
  }
  return out;
}

double agreement_accuracy(const std::vector<std::size_t>& predicted_1based,
                          const std::vector<std::size_t>& truth_1based, std::size_t n_examples) {
  if (n_examples == 0) throw std::invalid_argument("agreement_accuracy: no examples");
  std::set<std::size_t> pred(predicted_1based.begin(), predicted_1based.end());
  std::set<std::size_t> truth(truth_1based.begin(), truth_1based.end());
  std::size_t agree = 0;
  for (std::size_t i = 1; i <= n_examples; ++i)
    if (pred.count(i) == truth.count(i)) ++agree;
  return static_cast<double>(agree) / static_cast<double>(n_examples);
}

ScoringResult score_explanation(JudgeClient& judge, uint32_t feature,
                                const std::string& explanation,
                                const std::vector<EvidenceWindow>& scoring,
                                const std::vector<bool>& truth, const PromptTemplates& templates) {
  if (scoring.size() != truth.size())
    throw std::invalid_argument("score_explanation: truth labels do not match scoring windows");
  ScoringResult result;
  result.feature = feature;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i]) result.truth.push_back(i + 1);

  const RenderedPrompt prompt =
      render_prompt(scoring, PromptStage::kScore, &explanation, templates);
  std::optional<std::vector<std::size_t>> parsed;
  std::string last_reply;
  for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
    try {
      last_reply = judge.complete(prompt.system, prompt.user);
    } catch (const std::exception& e) {
      result.status = std::string("failed:judge:") + e.what();
      return result;
    }
    parsed = parse_index_reply(last_reply, scoring.size());
  }
  if (!parsed) {
    result.status = "failed:unparseable:" + last_reply;
    return result;
  }
  result.predicted = *parsed;
  result.accuracy = agreement_accuracy(result.predicted, result.truth, scoring.size());
  return result;
}

std::vector<FeatureInterpretation> run_autointerp(EvidenceIndex& index, JudgeClient& judge,
                                                  const PromptTemplates& templates,
                                                  const std::string& results_path, uint64_t seed) {
  std::map<uint32_t, FeatureInterpretation> existing;
  {
    std::ifstream probe(results_path);
    if (probe.good()) existing = load_autointerp_results(results_path);
  }
  std::ofstream out(results_path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open results file: " + results_path);

  const auto& cfg = index.config();
  const uint32_t n_eval = std::min<uint32_t>(index.sae().width, cfg.n_latents);
  std::vector<FeatureInterpretation> fresh;
  for (uint32_t f = 0; f < n_eval; ++f) {
    if (existing.count(f)) continue;  // resume: only unfinished features
    FeatureInterpretation fi;
    fi.feature = f;
    Rng rng(substream_seed(seed, "autointerp-feature", f));
    auto evidence = build_evidence(index, f, rng);
    if (!evidence) {
      fi.status = "dead";
    } else {
      const RenderedPrompt explain_prompt = render_prompt(
          evidence->generation, PromptStage::kExplain, nullptr, templates,
          cfg.activation_threshold);
      try {
        fi.explanation = judge.complete(explain_prompt.system, explain_prompt.user);
        fi.scoring = score_explanation(judge, f, fi.explanation, evidence->scoring,
                                       evidence->scoring_truth, templates);
        fi.status = fi.scoring.status;
      } catch (const std::exception& e) {
        fi.status = std::string("failed:explain:") + e.what();
      }
    }
    nlohmann::json row = {{"feature", fi.feature},
                          {"explanation", fi.explanation},
                          {"predicted", fi.scoring.predicted},
                          {"truth", fi.scoring.truth},
                          {"accuracy", fi.scoring.accuracy},
                          {"status", fi.status}};
    out << row.dump() << "\n";
    out.flush();
    fresh.push_back(std::move(fi));
  }
  return fresh;
}

std::map<uint32_t, FeatureInterpretation> load_autointerp_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open results file: " + path);
  std::map<uint32_t, FeatureInterpretation> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error(path + ": malformed results line");
    FeatureInterpretation fi;
    fi.feature = j["feature"].get<uint32_t>();
    fi.explanation = j["explanation"].get<std::string>();
    fi.scoring.feature = fi.feature;
    fi.scoring.predicted = j["predicted"].get<std::vector<std::size_t>>();
    fi.scoring.truth = j["truth"].get<std::vector<std::size_t>>();
    fi.scoring.accuracy = j["accuracy"].get<double>();
    fi.status = j["status"].get<std::string>();
    fi.scoring.status = fi.status;
    out[fi.feature] = std::move(fi);
  }
  return out;
}

}  // namespace diffsae
