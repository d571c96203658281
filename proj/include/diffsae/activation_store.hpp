#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace diffsae {

// Which token positions of a corrupted sequence contribute activations.
enum class Selector : uint8_t { kMasked = 0, kUnmasked = 1, kAll = 2 };

std::string selector_name(Selector s);
Selector selector_from_name(const std::string& name);

// Flat set of residual-stream vectors with their harvest provenance. Vectors
// are float32 on disk and in memory; everything upstream computes in float64
// and rounds once at this boundary.
class ActivationStore {
 public:
  struct RecordMeta {
    uint64_t sample_id;
    uint32_t position;
    float rate;
  };

  std::string backbone_id;
  uint32_t layer = 0;
  uint32_t dim = 0;
  Selector selector = Selector::kAll;
  uint64_t protocol_hash = 0;

  std::size_t count() const { return meta_.size(); }
  const std::vector<RecordMeta>& meta() const { return meta_; }
  const float* vector(std::size_t i) const { return vectors_.data() + i * dim; }
  std::vector<double> vector_f64(std::size_t i) const;

  void append(const RecordMeta& m, const double* vec);
  void append_f32(const RecordMeta& m, const float* vec);

  void save(const std::string& path) const;
  static ActivationStore load(const std::string& path);

 private:
  std::vector<RecordMeta> meta_;
  std::vector<float> vectors_;
};

}  // namespace diffsae
