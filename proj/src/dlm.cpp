#include "diffsae/dlm.hpp"

#include <cmath>
#include <stdexcept>

#include "diffsae/io.hpp"

namespace diffsae {

std::size_t MaskedState::masked_count() const {
  std::size_t n = 0;
  for (uint8_t m : masked) n += m != 0;
  return n;
}

std::vector<std::size_t> MaskedState::masked_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < masked.size(); ++i)
    if (masked[i]) out.push_back(i);
  return out;
}

std::vector<std::size_t> MaskedState::unmasked_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < masked.size(); ++i)
    if (!masked[i]) out.push_back(i);
  return out;
}

void MaskedState::check_consistent(uint32_t mask_id) const {
  if (ids.size() != masked.size()) throw std::logic_error("masked state: indicator length mismatch");
  for (std::size_t i = 0; i < ids.size(); ++i)
    if ((ids[i] == mask_id) != (masked[i] != 0))
      throw std::logic_error("masked state: indicator disagrees with MASK id at position " +
                             std::to_string(i));
}

MaskedState MaskedState::clean(std::vector<uint32_t> ids) {
  MaskedState s;
  s.masked.assign(ids.size(), 0);
  s.ids = std::move(ids);
  s.rate = 0.0;
  return s;
}

MaskedState corrupt_span(const std::vector<uint32_t>& x0, double t, Rng& rng, uint32_t mask_id,
                         std::size_t span_begin, std::size_t span_end) {
  if (!(t > 0.0) || t > 1.0)
    throw std::invalid_argument("corrupt: mask rate must lie in (0,1], got " + std::to_string(t));
  if (span_end > x0.size() || span_begin > span_end)
    throw std::invalid_argument("corrupt: bad span");
  MaskedState s;
  s.ids = x0;
  s.masked.assign(x0.size(), 0);
  s.rate = t;
  for (std::size_t i = span_begin; i < span_end; ++i) {
    if (rng.bernoulli(t)) {
      s.ids[i] = mask_id;
      s.masked[i] = 1;
    }
  }
  return s;
}

MaskedState corrupt(const std::vector<uint32_t>& x0, double t, Rng& rng, uint32_t mask_id) {
  return corrupt_span(x0, t, rng, mask_id, 0, x0.size());
}

CorruptionDraw draw_corruption(const std::vector<uint32_t>& x0, Rng& rng, uint32_t mask_id,
                               std::size_t span_begin, std::size_t span_end) {
  if (span_end <= span_begin) throw std::invalid_argument("draw_corruption: empty span");
  double t = rng.uniform01();
  if (t <= 0.0) t = 1e-12;
  MaskedState s = corrupt_span(x0, t, rng, mask_id, span_begin, span_end);
  if (s.masked_count() == 0) {
    t = rng.uniform01();
    if (t <= 0.0) t = 1e-12;
    s = corrupt_span(x0, t, rng, mask_id, span_begin, span_end);
  }
  if (s.masked_count() == 0) {
    const std::size_t pick = span_begin + static_cast<std::size_t>(rng.below(span_end - span_begin));
    s.ids[pick] = mask_id;
    s.masked[pick] = 1;
  }
  return {s.rate, std::move(s)};
}

CorruptionDraw draw_corruption(const std::vector<uint32_t>& x0, Rng& rng, uint32_t mask_id) {
  return draw_corruption(x0, rng, mask_id, 0, x0.size());
}

static Tensor randn(std::vector<std::size_t> shape, double std, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t.at(i) = rng.normal(0.0, std);
  return t;
}

DlmParams DlmParams::init(const DlmConfig& config, const Vocab& vocab, Rng& rng,
                          std::string backbone_id) {
  if (config.dim % config.heads != 0)
    throw std::invalid_argument("model dim must be divisible by heads");
  DlmParams p;
  p.config = config;
  p.vocab = vocab;
  p.backbone_id = std::move(backbone_id);
  const std::size_t d = config.dim, v = vocab.size(), ctx = config.context;
  const double std = config.init_std;
  p.tok_emb = randn({v, d}, std, rng);
  p.pos_emb = randn({ctx, d}, std, rng);
  p.blocks.resize(config.layers);
  for (auto& b : p.blocks) {
    b.ln1_gain = Tensor::full({d}, 1.0);
    b.ln1_bias = Tensor::zeros({d});
    b.wq = randn({d, d}, std, rng);
    b.bq = Tensor::zeros({d});
    b.wk = randn({d, d}, std, rng);
    b.bk = Tensor::zeros({d});
    b.wv = randn({d, d}, std, rng);
    b.bv = Tensor::zeros({d});
    b.wo = randn({d, d}, std, rng);
    b.bo = Tensor::zeros({d});
    b.ln2_gain = Tensor::full({d}, 1.0);
    b.ln2_bias = Tensor::zeros({d});
    b.mlp_w1 = randn({4 * d, d}, std, rng);
    b.mlp_b1 = Tensor::zeros({4 * d});
    b.mlp_w2 = randn({d, 4 * d}, std, rng);
    b.mlp_b2 = Tensor::zeros({d});
  }
  p.final_ln_gain = Tensor::full({d}, 1.0);
  p.final_ln_bias = Tensor::zeros({d});
  p.unembed_w = randn({v, d}, std, rng);
  p.unembed_b = Tensor::zeros({v});
  return p;
}

std::vector<std::pair<std::string, Tensor*>> DlmParams::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("tok_emb", &tok_emb);
  out.emplace_back("pos_emb", &pos_emb);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    auto& b = blocks[l];
    const std::string pre = "block" + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1_gain", &b.ln1_gain);
    out.emplace_back(pre + "ln1_bias", &b.ln1_bias);
    out.emplace_back(pre + "wq", &b.wq);
    out.emplace_back(pre + "bq", &b.bq);
    out.emplace_back(pre + "wk", &b.wk);
    out.emplace_back(pre + "bk", &b.bk);
    out.emplace_back(pre + "wv", &b.wv);
    out.emplace_back(pre + "bv", &b.bv);
    out.emplace_back(pre + "wo", &b.wo);
    out.emplace_back(pre + "bo", &b.bo);
    out.emplace_back(pre + "ln2_gain", &b.ln2_gain);
    out.emplace_back(pre + "ln2_bias", &b.ln2_bias);
    out.emplace_back(pre + "mlp_w1", &b.mlp_w1);
    out.emplace_back(pre + "mlp_b1", &b.mlp_b1);
    out.emplace_back(pre + "mlp_w2", &b.mlp_w2);
    out.emplace_back(pre + "mlp_b2", &b.mlp_b2);
  }
  out.emplace_back("final_ln_gain", &final_ln_gain);
  out.emplace_back("final_ln_bias", &final_ln_bias);
  out.emplace_back("unembed_w", &unembed_w);
  out.emplace_back("unembed_b", &unembed_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> DlmParams::named_params() const {
  auto mutable_list = const_cast<DlmParams*>(this)->named_params();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_list.size());
  for (auto& [name, t] : mutable_list) out.emplace_back(name, t);
  return out;
}

DlmParams DlmParams::as_leaves() const {
  DlmParams copy = *this;
  for (auto& [name, t] : copy.named_params()) *t = Tensor::param(*t);
  return copy;
}

void DlmParams::save(const std::string& path) const {
  io::BinaryWriter w(path);
  w.magic("DLMS");
  w.u32(1);
  w.str(backbone_id);
  w.u32(config.dim);
  w.u32(config.layers);
  w.u32(config.heads);
  w.u32(config.context);
  w.f64(config.init_std);
  const auto& bytes = vocab.byte_tokens();
  w.u32(static_cast<uint32_t>(bytes.size()));
  for (uint8_t b : bytes) w.u8(b);
  auto params = named_params();
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u32(static_cast<uint32_t>(t->shape.size()));
    for (std::size_t e : t->shape) w.u32(static_cast<uint32_t>(e));
    w.f32_from_f64(*t->data);
  }
  w.close();
}

DlmParams DlmParams::load(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("DLMS");
  const uint32_t version = r.u32();
  if (version != 1) throw std::runtime_error(path + ": unsupported model format version");
  DlmParams p;
  p.backbone_id = r.str();
  p.config.dim = r.u32();
  p.config.layers = r.u32();
  p.config.heads = r.u32();
  p.config.context = r.u32();
  p.config.init_std = r.f64();
  const uint32_t n_bytes = r.u32();
  std::string alphabet(n_bytes, '\0');
  for (uint32_t i = 0; i < n_bytes; ++i) alphabet[i] = static_cast<char>(r.u8());
  p.vocab = n_bytes == 256 ? Vocab::bytes() : Vocab::from_corpus(alphabet);
  Rng dummy(0);
  DlmParams proto = DlmParams::init(p.config, p.vocab, dummy, p.backbone_id);
  p.blocks.resize(p.config.layers);
  auto slots = p.named_params();
  auto proto_slots = proto.named_params();
  const uint32_t n_params = r.u32();
  if (n_params != slots.size()) throw std::runtime_error(path + ": parameter count mismatch");
  for (uint32_t i = 0; i < n_params; ++i) {
    const std::string name = r.str();
    if (name != slots[i].first) throw std::runtime_error(path + ": unexpected parameter " + name);
    const uint32_t ndim = r.u32();
    std::vector<std::size_t> shape(ndim);
    for (auto& e : shape) e = r.u32();
    if (shape != proto_slots[i].second->shape)
      throw std::runtime_error(path + ": shape mismatch for " + name);
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    Tensor t(shape, std::make_shared<std::vector<double>>(r.f64_from_f32(n)));
    *slots[i].second = std::move(t);
  }
  return p;
}

ForwardResult dlm_forward(const DlmParams& params, const MaskedState& state,
                          const ResidualHook* hook) {
  const std::size_t n = state.ids.size();
  if (n == 0) throw std::invalid_argument("dlm_forward: empty sequence");
  if (n > params.config.context)
    throw std::invalid_argument("dlm_forward: sequence length " + std::to_string(n) +
                                " exceeds context " + std::to_string(params.config.context));
  if (hook && ag::grad_enabled())
    throw std::logic_error("dlm_forward: residual hooks are only supported without gradients");
  state.check_consistent(params.vocab.mask_id());

  using namespace ag;
  Tensor x = add(embed(params.tok_emb, state.ids), slice_rows(params.pos_emb, 0, n));
  ForwardResult result;
  result.residuals.reserve(params.blocks.size());
  const std::size_t heads = params.config.heads;
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    const auto& b = params.blocks[l];
    Tensor h = layer_norm(x, b.ln1_gain, b.ln1_bias);
    Tensor att = attention(linear(h, b.wq, b.bq), linear(h, b.wk, b.bk), linear(h, b.wv, b.bv), heads);
    x = add(x, linear(att, b.wo, b.bo));
    Tensor h2 = layer_norm(x, b.ln2_gain, b.ln2_bias);
    Tensor mlp = linear(relu(linear(h2, b.mlp_w1, b.mlp_b1)), b.mlp_w2, b.mlp_b2);
    x = add(x, mlp);
    if (hook && hook->layer == l) hook->apply(x, state);
    result.residuals.push_back(x);
  }
  Tensor final_h = layer_norm(x, params.final_ln_gain, params.final_ln_bias);
  result.logits = linear(final_h, params.unembed_w, params.unembed_b);
  return result;
}

Tensor sample_loss_graph(const DlmParams& params, const std::vector<uint32_t>& x0,
                         const MaskedState& state) {
  if (x0.size() != state.ids.size())
    throw std::invalid_argument("sample_loss_graph: x0 and state length differ");
  const std::size_t n_masked = state.masked_count();
  if (n_masked == 0) throw std::invalid_argument("sample_loss_graph: state has no masked positions");
  ForwardResult fwd = dlm_forward(params, state);
  std::vector<double> weights(x0.size(), 0.0);
  const double w = 1.0 / state.rate;
  for (std::size_t i = 0; i < x0.size(); ++i)
    if (state.masked[i]) weights[i] = w;
  return ag::softmax_xent(fwd.logits, x0, weights);
}

double dlm_loss(const DlmParams& params, const std::vector<std::vector<uint32_t>>& batch, Rng& rng,
                const ResidualHook* hook) {
  if (batch.empty()) throw std::invalid_argument("dlm_loss: empty batch");
  ag::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& x0 : batch) {
    CorruptionDraw draw = draw_corruption(x0, rng, params.vocab.mask_id());
    ForwardResult fwd = dlm_forward(params, draw.state, hook);
    std::vector<double> weights(x0.size(), 0.0);
    for (std::size_t i = 0; i < x0.size(); ++i)
      if (draw.state.masked[i]) weights[i] = 1.0 / draw.t;
    total += ag::softmax_xent(fwd.logits, x0, weights).item();
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace diffsae
