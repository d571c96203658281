#include "diffsae/train.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "diffsae/rng.hpp"

namespace diffsae {

AdamOptimizer::AdamOptimizer(std::vector<Tensor*> params, Config config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Tensor* p : params_) {
    m_.emplace_back(p->numel(), 0.0);
    v_.emplace_back(p->numel(), 0.0);
  }
}

void AdamOptimizer::step(const std::vector<const std::vector<double>*>& grads) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("optimizer step: gradient list size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor* p = params_[pi];
    const std::vector<double>& g = *grads[pi];
    if (g.size() != p->numel())
      throw std::invalid_argument("optimizer step: gradient size mismatch for param " +
                                  std::to_string(pi));
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->at(i) -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

namespace {

struct SampleTask {
  std::vector<uint32_t> x0;
  MaskedState state;
};

// One optimizer step over prepared samples: per-sample graphs evaluated
// independently (parallel over samples), gradients reduced in sample order.
double batched_step(DlmParams& params, AdamOptimizer& adam,
                    const std::vector<SampleTask>& tasks) {
  const std::size_t batch = tasks.size();
  auto names = params.named_params();
  const std::size_t n_params = names.size();

  std::vector<std::vector<std::vector<double>>> sample_grads(batch);
  std::vector<double> sample_loss(batch, 0.0);
  const Tensor seed = Tensor::scalar(1.0 / static_cast<double>(batch));

#pragma omp parallel for schedule(dynamic)
  for (long long si = 0; si < static_cast<long long>(batch); ++si) {
    DlmParams leaves = params.as_leaves();
    Tensor loss = sample_loss_graph(leaves, tasks[si].x0, tasks[si].state);
    ag::backward(loss, &seed);
    sample_loss[si] = loss.item();
    auto leaf_names = leaves.named_params();
    auto& grads = sample_grads[si];
    grads.reserve(n_params);
    for (auto& [name, t] : leaf_names) grads.push_back(std::move(*t->grad));
  }

  std::vector<std::vector<double>> total(n_params);
  for (std::size_t pi = 0; pi < n_params; ++pi) total[pi].assign(names[pi].second->numel(), 0.0);
  for (std::size_t si = 0; si < batch; ++si)
    for (std::size_t pi = 0; pi < n_params; ++pi) {
      const auto& g = sample_grads[si][pi];
      auto& acc = total[pi];
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }

  std::vector<const std::vector<double>*> grad_ptrs;
  grad_ptrs.reserve(n_params);
  for (auto& g : total) grad_ptrs.push_back(&g);
  adam.step(grad_ptrs);

  double mean_loss = 0.0;
  for (double l : sample_loss) mean_loss += l;
  return mean_loss / static_cast<double>(batch);
}

std::vector<uint32_t> sample_window(const std::vector<uint32_t>& corpus_ids, std::size_t window,
                                    Rng& rng) {
  if (corpus_ids.size() <= window) return corpus_ids;
  const std::size_t start = static_cast<std::size_t>(rng.below(corpus_ids.size() - window + 1));
  return std::vector<uint32_t>(corpus_ids.begin() + start, corpus_ids.begin() + start + window);
}

TrainResult run_training(DlmParams& params, const TrainConfig& config, uint64_t seed,
                         const std::function<SampleTask(uint64_t sample_index, Rng& window_rng,
                                                        Rng& corruption_rng)>& make_sample) {
  if (config.batch == 0) throw std::invalid_argument("train: batch must be positive");
  auto names = params.named_params();
  std::vector<Tensor*> param_ptrs;
  for (auto& [name, t] : names) param_ptrs.push_back(t);
  AdamOptimizer adam(param_ptrs, config.adam);

  TrainResult result;
  result.loss_curve.reserve(config.steps);
  for (uint64_t step = 0; step < config.steps; ++step) {
    std::vector<SampleTask> tasks(config.batch);
    for (uint32_t b = 0; b < config.batch; ++b) {
      const uint64_t sample_index = step * config.batch + b;
      Rng window_rng(substream_seed(seed, "train-window", sample_index));
      Rng corruption_rng(substream_seed(seed, "train-corruption", sample_index));
      tasks[b] = make_sample(sample_index, window_rng, corruption_rng);
    }
    const double loss = batched_step(params, adam, tasks);
    if (!std::isfinite(loss))
      throw std::runtime_error("training aborted: non-finite loss at step " + std::to_string(step));
    result.loss_curve.push_back(loss);
  }
  return result;
}

}  // namespace

TrainResult train_dlm(DlmParams& params, const std::string& corpus_text, const TrainConfig& config,
                      uint64_t seed) {
  const std::vector<uint32_t> corpus_ids = params.vocab.encode(corpus_text);
  if (corpus_ids.size() < 2) throw std::invalid_argument("train_dlm: corpus too small");
  const std::size_t window =
      config.window ? std::min<std::size_t>(config.window, params.config.context)
                    : params.config.context;
  const uint32_t mask_id = params.vocab.mask_id();
  return run_training(params, config, seed,
                      [&](uint64_t, Rng& window_rng, Rng& corruption_rng) {
                        SampleTask task;
                        task.x0 = sample_window(corpus_ids, window, window_rng);
                        task.state = draw_corruption(task.x0, corruption_rng, mask_id).state;
                        return task;
                      });
}

std::vector<InstructionRecord> load_instruction_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instruction corpus: " + path);
  std::vector<InstructionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("prompt") || !j.contains("response"))
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected JSON object with \"prompt\" and \"response\"");
    records.push_back({j["prompt"].get<std::string>(), j["response"].get<std::string>()});
  }
  if (records.empty()) throw std::runtime_error(path + ": no instruction records");
  return records;
}

std::string format_instruction(const InstructionRecord& rec) {
  return rec.prompt + "\n" + rec.response;
}

namespace {

// Returns (x0, response span) truncated to the model context.
std::pair<std::vector<uint32_t>, std::pair<std::size_t, std::size_t>> instruction_tokens(
    const DlmParams& params, const InstructionRecord& rec) {
  const std::string prompt_part = rec.prompt + "\n";
  std::vector<uint32_t> ids = params.vocab.encode(prompt_part + rec.response);
  const std::size_t ctx = params.config.context;
  if (ids.size() > ctx) ids.resize(ctx);
  std::size_t span_begin = params.vocab.encode(prompt_part).size();
  if (span_begin >= ids.size()) span_begin = ids.size() > 0 ? ids.size() - 1 : 0;
  return {std::move(ids), {span_begin, ids.size()}};
}

}  // namespace

TrainResult finetune_dlm(DlmParams& params, const std::vector<InstructionRecord>& corpus,
                         const TrainConfig& config, uint64_t seed) {
  if (corpus.empty()) throw std::invalid_argument("finetune_dlm: empty instruction corpus");
  const uint32_t mask_id = params.vocab.mask_id();
  return run_training(params, config, seed,
                      [&](uint64_t, Rng& window_rng, Rng& corruption_rng) {
                        const auto& rec = corpus[window_rng.below(corpus.size())];
                        auto [ids, span] = instruction_tokens(params, rec);
                        SampleTask task;
                        task.state =
                            draw_corruption(ids, corruption_rng, mask_id, span.first, span.second)
                                .state;
                        task.x0 = std::move(ids);
                        return task;
                      });
}

double instruction_loss(const DlmParams& params, const std::vector<InstructionRecord>& corpus,
                        uint64_t seed, std::size_t samples) {
  if (corpus.empty()) throw std::invalid_argument("instruction_loss: empty corpus");
  if (samples == 0) throw std::invalid_argument("instruction_loss: need at least one sample");
  ag::NoGradGuard no_grad;
  const uint32_t mask_id = params.vocab.mask_id();
  double total = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    Rng pick_rng(substream_seed(seed, "instr-pick", s));
    Rng corruption_rng(substream_seed(seed, "instr-corruption", s));
    const auto& rec = corpus[pick_rng.below(corpus.size())];
    auto [ids, span] = instruction_tokens(params, rec);
    CorruptionDraw draw = draw_corruption(ids, corruption_rng, mask_id, span.first, span.second);
    ForwardResult fwd = dlm_forward(params, draw.state);
    std::vector<double> weights(ids.size(), 0.0);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (draw.state.masked[i]) weights[i] = 1.0 / draw.t;
    total += ag::softmax_xent(fwd.logits, ids, weights).item();
  }
  return total / static_cast<double>(samples);
}

}  // namespace diffsae
