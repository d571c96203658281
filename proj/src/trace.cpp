#include "diffsae/trace.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

#include "diffsae/io.hpp"

namespace diffsae {

void DecodingTrace::validate() const {
  if (step_records.size() != steps) throw std::logic_error("trace: step count mismatch");
  std::unordered_set<uint32_t> prev_masked;
  for (uint32_t k = 0; k < steps; ++k) {
    const Step& s = step_records[k];
    if (!std::is_sorted(s.masked.begin(), s.masked.end()))
      throw std::logic_error("trace: masked set not sorted at step " + std::to_string(k));
    for (uint32_t pos : s.masked)
      if (pos >= positions) throw std::logic_error("trace: masked position out of range");
    if (k > 0) {
      for (uint32_t pos : s.masked)
        if (!prev_masked.count(pos))
          throw std::logic_error("trace: position " + std::to_string(pos) +
                                 " re-masked at step " + std::to_string(k));
    }
    prev_masked = std::unordered_set<uint32_t>(s.masked.begin(), s.masked.end());
    if (s.sets.size() != layers.size() || s.top1.size() != layers.size())
      throw std::logic_error("trace: layer record count mismatch at step " + std::to_string(k));
    for (std::size_t li = 0; li < layers.size(); ++li) {
      if (s.sets[li].size() != positions || s.top1[li].size() != positions)
        throw std::logic_error("trace: position record count mismatch at step " + std::to_string(k));
      for (std::size_t i = 0; i < positions; ++i) {
        const auto& set = s.sets[li][i];
        if (set.size() > k_feat) throw std::logic_error("trace: latent set larger than k_feat");
        if (set.empty()) {
          if (s.top1[li][i] != -1)
            throw std::logic_error("trace: top1 present for empty latent set");
        } else if (s.top1[li][i] != static_cast<int64_t>(set.front())) {
          throw std::logic_error("trace: top1 must be the first (strongest) set element");
        }
      }
    }
  }
}

void DecodingTrace::save(const std::string& path) const {
  validate();
  io::BinaryWriter w(path);
  w.magic("DTRC");
  w.u32(1);
  w.str(strategy);
  w.u32(steps);
  w.u32(positions);
  w.u32(static_cast<uint32_t>(layers.size()));
  for (uint32_t l : layers) w.u32(l);
  w.u32(k_feat);
  for (const Step& s : step_records) {
    w.varint(s.masked.size());
    uint32_t prev = 0;
    for (std::size_t i = 0; i < s.masked.size(); ++i) {
      w.varint(s.masked[i] - prev);  // delta-coded, sets are sorted
      prev = s.masked[i];
    }
    for (std::size_t li = 0; li < layers.size(); ++li)
      for (std::size_t p = 0; p < positions; ++p) {
        const auto& set = s.sets[li][p];
        w.varint(set.size());
        for (uint32_t idx : set) w.varint(idx);  // rank order, raw
      }
  }
  w.close();
}

DecodingTrace DecodingTrace::load(const std::string& path) {
  io::BinaryReader r(path);
  r.expect_magic("DTRC");
  const uint32_t version = r.u32();
  if (version != 1) throw std::runtime_error(path + ": unsupported trace format version");
  DecodingTrace t;
  t.strategy = r.str();
  t.steps = r.u32();
  t.positions = r.u32();
  const uint32_t n_layers = r.u32();
  t.layers.resize(n_layers);
  for (auto& l : t.layers) l = r.u32();
  t.k_feat = r.u32();
  t.step_records.resize(t.steps);
  for (auto& s : t.step_records) {
    const uint64_t n_masked = r.varint();
    s.masked.resize(n_masked);
    uint32_t prev = 0;
    for (uint64_t i = 0; i < n_masked; ++i) {
      prev += static_cast<uint32_t>(r.varint());
      s.masked[i] = prev;
    }
    s.sets.assign(n_layers, std::vector<std::vector<uint32_t>>(t.positions));
    s.top1.assign(n_layers, std::vector<int64_t>(t.positions, -1));
    for (uint32_t li = 0; li < n_layers; ++li)
      for (uint32_t p = 0; p < t.positions; ++p) {
        const uint64_t n = r.varint();
        auto& set = s.sets[li][p];
        set.resize(n);
        for (uint64_t i = 0; i < n; ++i) set[i] = static_cast<uint32_t>(r.varint());
        s.top1[li][p] = set.empty() ? -1 : static_cast<int64_t>(set.front());
      }
  }
  t.validate();
  return t;
}

}  // namespace diffsae
