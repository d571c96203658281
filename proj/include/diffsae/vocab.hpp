#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace diffsae {

// Byte-level vocabulary: ids [0, n) map to single-byte tokens, followed by the
// reserved MASK and PAD ids.
class Vocab {
 public:
  // All 256 byte values.
  static Vocab bytes();
  // Only the byte values present in `text`, in ascending byte order.
  static Vocab from_corpus(std::string_view text);

  uint32_t size() const { return static_cast<uint32_t>(byte_tokens_.size()) + 2; }
  uint32_t mask_id() const { return static_cast<uint32_t>(byte_tokens_.size()); }
  uint32_t pad_id() const { return mask_id() + 1; }

  const std::vector<uint8_t>& byte_tokens() const { return byte_tokens_; }

  // Throws when the text contains a byte outside the vocabulary.
  std::vector<uint32_t> encode(std::string_view text) const;
  // MASK renders as "[MASK]", PAD as "".
  std::string decode(const std::vector<uint32_t>& ids) const;
  std::string token_text(uint32_t id) const;

  bool operator==(const Vocab& other) const { return byte_tokens_ == other.byte_tokens_; }

 private:
  explicit Vocab(std::vector<uint8_t> byte_tokens);
  void build_lookup();

  std::vector<uint8_t> byte_tokens_;
  int32_t byte_to_id_[256];
};

}  // namespace diffsae
