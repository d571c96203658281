#include "diffsae/vocab.hpp"

#include <algorithm>
#include <stdexcept>

namespace diffsae {

Vocab::Vocab(std::vector<uint8_t> byte_tokens) : byte_tokens_(std::move(byte_tokens)) {
  if (size() < 4) throw std::invalid_argument("vocabulary needs at least 2 byte tokens");
  build_lookup();
}

void Vocab::build_lookup() {
  std::fill(std::begin(byte_to_id_), std::end(byte_to_id_), -1);
  for (std::size_t i = 0; i < byte_tokens_.size(); ++i) byte_to_id_[byte_tokens_[i]] = static_cast<int32_t>(i);
}

Vocab Vocab::bytes() {
  std::vector<uint8_t> all(256);
  for (int i = 0; i < 256; ++i) all[i] = static_cast<uint8_t>(i);
  return Vocab(std::move(all));
}

Vocab Vocab::from_corpus(std::string_view text) {
  bool seen[256] = {};
  for (unsigned char c : text) seen[c] = true;
  std::vector<uint8_t> present;
  for (int i = 0; i < 256; ++i)
    if (seen[i]) present.push_back(static_cast<uint8_t>(i));
  return Vocab(std::move(present));
}

std::vector<uint32_t> Vocab::encode(std::string_view text) const {
  std::vector<uint32_t> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) {
    const int32_t id = byte_to_id_[c];
    if (id < 0)
      throw std::invalid_argument("byte 0x" + std::to_string(static_cast<int>(c)) +
                                  " not in vocabulary");
    ids.push_back(static_cast<uint32_t>(id));
  }
  return ids;
}

std::string Vocab::decode(const std::vector<uint32_t>& ids) const {
  std::string out;
  out.reserve(ids.size());
  for (uint32_t id : ids) out += token_text(id);
  return out;
}

std::string Vocab::token_text(uint32_t id) const {
  if (id < byte_tokens_.size()) return std::string(1, static_cast<char>(byte_tokens_[id]));
  if (id == mask_id()) return "[MASK]";
  if (id == pad_id()) return "";
  throw std::invalid_argument("token id " + std::to_string(id) + " out of range");
}

}  // namespace diffsae
