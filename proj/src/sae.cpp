#include "diffsae/sae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "diffsae/autograd.hpp"
#include "diffsae/io.hpp"
#include "diffsae/train.hpp"

namespace diffsae {

SaeParams SaeParams::init(uint32_t width, uint32_t input_dim, uint32_t k_act, Rng& rng,
                          std::string backbone_id, uint32_t layer, Selector selector) {
  if (width < input_dim) throw std::invalid_argument("sae: width must be at least the input dim");
  if (k_act < 1 || k_act > width)
    throw std::invalid_argument("sae: k_act must lie in [1, width], got " + std::to_string(k_act));
  SaeParams p;
  p.width = width;
  p.input_dim = input_dim;
  p.k_act = k_act;
  p.backbone_id = std::move(backbone_id);
  p.layer = layer;
  p.selector = selector;
  p.w_dec = Tensor::zeros({input_dim, width});
  for (uint32_t f = 0; f < width; ++f) {
    double norm_sq = 0.0;
    std::vector<double> col(input_dim);
    for (auto& c : col) {
      c = rng.normal();
      norm_sq += c * c;
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (uint32_t j = 0; j < input_dim; ++j) p.w_dec.at(j * width + f) = col[j] * inv;
  }
  p.w_enc = Tensor::zeros({width, input_dim});
  for (uint32_t f = 0; f < width; ++f)
    for (uint32_t j = 0; j < input_dim; ++j) p.w_enc.at(f * input_dim + j) = p.w_dec.at(j * width + f);
  p.b_enc = Tensor::zeros({width});
  p.b_dec = Tensor::zeros({input_dim});
  return p;
}

std::vector<double> SaeParams::decoder_atom(uint32_t feature) const {
  if (feature >= width) throw std::out_of_range("sae: feature index out of range");
  std::vector<double> atom(input_dim);
  for (uint32_t j = 0; j < input_dim; ++j) atom[j] = w_dec.at(j * width + feature);
  return atom;
}

double SaeParams::decoder_atom_norm(uint32_t feature) const {
  double s = 0.0;
  for (uint32_t j = 0; j < input_dim; ++j) {
    const double c = w_dec.at(j * width + feature);
    s += c * c;
  }
  return std::sqrt(s);
}

void SaeParams::renormalize_decoder() {
  for (uint32_t f = 0; f < width; ++f) {
    double norm_sq = 0.0;
    for (uint32_t j = 0; j < input_dim; ++j) {
      const double c = w_dec.at(j * width + f);
      norm_sq += c * c;
    }
    if (norm_sq <= 0.0) continue;  // degenerate atom left alone
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (uint32_t j = 0; j < input_dim; ++j) w_dec.at(j * width + f) *= inv;
  }
}

void SaeParams::save(const std::string& path) const {
  io::BinaryWriter w(path);
  w.magic("SAEC");
  w.u32(1);
  w.str(backbone_id);
  w.u32(layer);
  w.u8(static_cast<uint8_t>(selector));
  w.u32(width);
  w.u32(input_dim);
  w.u32(k_act);
  w.f32_from_f64(*w_enc.data);
  w.f32_from_f64(*b_enc.data);
  w.f32_from_f64(*w_dec.data);
  w.f32_from_f64(*b_dec.data);
  w.close();
}

SaeParams SaeParams::load(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("SAEC");
  const uint32_t version = r.u32();
  if (version != 1) throw std::runtime_error(path + ": unsupported SAE format version");
  SaeParams p;
  p.backbone_id = r.str();
  p.layer = r.u32();
  p.selector = static_cast<Selector>(r.u8());
  p.width = r.u32();
  p.input_dim = r.u32();
  p.k_act = r.u32();
  const std::size_t wd = static_cast<std::size_t>(p.width) * p.input_dim;
  p.w_enc = Tensor({p.width, p.input_dim},
                   std::make_shared<std::vector<double>>(r.f64_from_f32(wd)));
  p.b_enc = Tensor({p.width}, std::make_shared<std::vector<double>>(r.f64_from_f32(p.width)));
  p.w_dec = Tensor({p.input_dim, p.width},
                   std::make_shared<std::vector<double>>(r.f64_from_f32(wd)));
  p.b_dec = Tensor({p.input_dim}, std::make_shared<std::vector<double>>(r.f64_from_f32(p.input_dim)));
  return p;
}

SaeLatents sae_encode(const SaeParams& sae, const double* x) {
  const uint32_t width = sae.width, d = sae.input_dim;
  std::vector<double> pre(width);
  for (uint32_t f = 0; f < width; ++f) {
    const double* row = sae.w_enc.ptr() + static_cast<std::size_t>(f) * d;
    double acc = sae.b_enc.at(f);
    for (uint32_t j = 0; j < d; ++j) acc += row[j] * x[j];
    pre[f] = acc > 0.0 ? acc : 0.0;
  }
  // Keep the k_act largest post-ReLU values; ties break to the lowest index.
  std::vector<uint32_t> order(width);
  std::iota(order.begin(), order.end(), 0u);
  const uint32_t k = sae.k_act;
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&pre](uint32_t a, uint32_t b) {
    if (pre[a] != pre[b]) return pre[a] > pre[b];
    return a < b;
  });
  SaeLatents out;
  out.values.assign(width, 0.0);
  for (uint32_t i = 0; i < k; ++i) {
    const uint32_t f = order[i];
    if (pre[f] > 0.0) {
      out.values[f] = pre[f];
      out.active.push_back(f);
    }
  }
  std::sort(out.active.begin(), out.active.end());
  return out;
}

SaeLatents sae_encode(const SaeParams& sae, const std::vector<double>& x) {
  if (x.size() != sae.input_dim)
    throw std::invalid_argument("sae_encode: input length " + std::to_string(x.size()) +
                                " does not match dim " + std::to_string(sae.input_dim));
  return sae_encode(sae, x.data());
}

std::vector<double> sae_decode(const SaeParams& sae, const SaeLatents& h) {
  const uint32_t width = sae.width, d = sae.input_dim;
  if (h.values.size() != width)
    throw std::invalid_argument("sae_decode: latent length " + std::to_string(h.values.size()) +
                                " does not match width " + std::to_string(width));
  std::vector<double> out(sae.b_dec.ptr(), sae.b_dec.ptr() + d);
  for (uint32_t f : h.active) {
    const double v = h.values[f];
    for (uint32_t j = 0; j < d; ++j) out[j] += sae.w_dec.at(static_cast<std::size_t>(j) * width + f) * v;
  }
  return out;
}

std::vector<double> sae_reconstruct(const SaeParams& sae, const double* x) {
  return sae_decode(sae, sae_encode(sae, x));
}

std::pair<std::vector<uint32_t>, int64_t> strongest_latents(const SaeLatents& h, uint32_t k) {
  std::vector<uint32_t> ranked = h.active;
  std::sort(ranked.begin(), ranked.end(), [&h](uint32_t a, uint32_t b) {
    if (h.values[a] != h.values[b]) return h.values[a] > h.values[b];
    return a < b;
  });
  if (ranked.size() > k) ranked.resize(k);
  const int64_t top1 = ranked.empty() ? -1 : static_cast<int64_t>(ranked.front());
  return {std::move(ranked), top1};
}

SaeTrainResult train_sae(const ActivationStore& store, const SaeTrainConfig& config,
                         uint64_t seed) {
  if (store.count() == 0) throw std::invalid_argument("train_sae: empty activation store");
  const uint32_t d = store.dim;
  const uint32_t width = config.width ? config.width : config.width_factor * d;
  if (config.k_act > width)
    throw std::invalid_argument("train_sae: k_act " + std::to_string(config.k_act) +
                                " exceeds width " + std::to_string(width));
  if (config.batch == 0) throw std::invalid_argument("train_sae: batch must be positive");
  Rng init_rng(substream_seed(seed, "sae-init"));
  SaeTrainResult result;
  result.params = SaeParams::init(width, d, config.k_act, init_rng, store.backbone_id, store.layer,
                                  store.selector);
  SaeParams& sae = result.params;

  // Leaves share storage with the params; Adam updates flow through.
  Tensor w_enc = Tensor::param(sae.w_enc);
  Tensor b_enc = Tensor::param(sae.b_enc);
  Tensor w_dec = Tensor::param(sae.w_dec);
  Tensor b_dec = Tensor::param(sae.b_dec);
  std::vector<Tensor> leaves{w_enc, b_enc, w_dec, b_dec};
  AdamOptimizer adam({&sae.w_enc, &sae.b_enc, &sae.w_dec, &sae.b_dec},
                     {config.lr, config.beta1, config.beta2, config.adam_eps});

  std::vector<std::size_t> order(store.count());
  std::iota(order.begin(), order.end(), std::size_t{0});

  uint64_t step = 0;
  for (uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle_rng(substream_seed(seed, "sae-shuffle", epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch, ++step) {
      const std::size_t b = std::min<std::size_t>(config.batch, order.size() - begin);
      Tensor x = Tensor::zeros({b, d});
      for (std::size_t i = 0; i < b; ++i) {
        const float* v = store.vector(order[begin + i]);
        for (uint32_t j = 0; j < d; ++j) x.at(i * d + j) = v[j];
      }
      for (auto& leaf : leaves) ag::zero_grad(leaf);
      Tensor h = ag::topk_keep(ag::relu(ag::linear(x, w_enc, b_enc)), sae.k_act);
      Tensor x_hat = ag::linear(h, w_dec, b_dec);
      Tensor objective = ag::sum_sq(ag::sub(x, x_hat));
      if (config.l1_lambda != 0.0)
        objective = ag::add(objective, ag::scale(ag::sum(h), config.l1_lambda));
      Tensor loss = ag::scale(objective, 1.0 / static_cast<double>(b));
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train_sae aborted: non-finite loss at step " +
                                 std::to_string(step));
      ag::backward(loss);
      adam.step({w_enc.grad.get(), b_enc.grad.get(), w_dec.grad.get(), b_dec.grad.get()});
      sae.renormalize_decoder();
      result.loss_curve.push_back(loss_value);
    }
  }
  return result;
}

std::size_t dead_latent_count(const SaeParams& sae, const ActivationStore& store,
                              std::size_t threshold) {
  if (store.count() == 0) throw std::invalid_argument("dead_latent_count: empty store");
  std::vector<std::size_t> counts(sae.width, 0);
  for (std::size_t i = 0; i < store.count(); ++i) {
    const auto x = store.vector_f64(i);
    const SaeLatents h = sae_encode(sae, x);
    for (uint32_t f : h.active) ++counts[f];
  }
  std::size_t dead = 0;
  for (std::size_t c : counts) dead += c < threshold;
  return dead;
}

}  // namespace diffsae
