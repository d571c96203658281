#include "diffsae/activation_store.hpp"

#include <stdexcept>

#include "diffsae/io.hpp"

namespace diffsae {

std::string selector_name(Selector s) {
  switch (s) {
    case Selector::kMasked: return "mask";
    case Selector::kUnmasked: return "unmask";
    case Selector::kAll: return "all";
  }
  throw std::logic_error("unknown selector");
}

Selector selector_from_name(const std::string& name) {
  if (name == "mask") return Selector::kMasked;
  if (name == "unmask") return Selector::kUnmasked;
  if (name == "all") return Selector::kAll;
  throw std::invalid_argument("unknown selector: " + name);
}

std::vector<double> ActivationStore::vector_f64(std::size_t i) const {
  const float* v = vector(i);
  return std::vector<double>(v, v + dim);
}

void ActivationStore::append(const RecordMeta& m, const double* vec) {
  meta_.push_back(m);
  for (uint32_t j = 0; j < dim; ++j) vectors_.push_back(static_cast<float>(vec[j]));
}

void ActivationStore::append_f32(const RecordMeta& m, const float* vec) {
  meta_.push_back(m);
  vectors_.insert(vectors_.end(), vec, vec + dim);
}

void ActivationStore::save(const std::string& path) const {
  io::BinaryWriter w(path);
  w.magic("ACTS");
  w.u32(1);
  w.str(backbone_id);
  w.u32(layer);
  w.u32(dim);
  w.u8(static_cast<uint8_t>(selector));
  w.u64(protocol_hash);
  w.u64(meta_.size());
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    w.u64(meta_[i].sample_id);
    w.u32(meta_[i].position);
    w.f32(meta_[i].rate);
    for (uint32_t j = 0; j < dim; ++j) w.f32(vectors_[i * dim + j]);
  }
  w.close();
}

ActivationStore ActivationStore::load(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("ACTS");
  const uint32_t version = r.u32();
  if (version != 1) throw std::runtime_error(path + ": unsupported store format version");
  ActivationStore s;
  s.backbone_id = r.str();
  s.layer = r.u32();
  s.dim = r.u32();
  s.selector = static_cast<Selector>(r.u8());
  s.protocol_hash = r.u64();
  const uint64_t count = r.u64();
  s.meta_.reserve(count);
  s.vectors_.reserve(count * s.dim);
  for (uint64_t i = 0; i < count; ++i) {
    RecordMeta m{};
    m.sample_id = r.u64();
    m.position = r.u32();
    m.rate = r.f32();
    s.meta_.push_back(m);
    auto vec = r.f32_array(s.dim);
    s.vectors_.insert(s.vectors_.end(), vec.begin(), vec.end());
  }
  return s;
}

}  // namespace diffsae
