#pragma once

#include "signmotion/types.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace signmotion {

enum class TextSource { toy, external };

struct TextEmbedding {
  Vec vector;
  TextSource source = TextSource::toy;
};

// Deterministic hermetic sentence encoder: whitespace tokens are hashed to
// fixed pseudo-random unit vectors, averaged and L2-normalized.
TextEmbedding encode_toy(const std::string& text, Index dim = 768);

std::string sha256_hex(std::string_view data);

struct ExternalEncoderConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8900"
  std::filesystem::path cache_dir;
  Index dim = 768;
};

// POSTs {"text": ...} to <endpoint>/embed and expects {"embedding": [f x dim]}.
// Responses are cached under cache_dir/<sha256(text)>.json; cache hits never
// touch the network. Throws UnavailableError when the service cannot be
// reached and nothing is cached, ProtocolError on a malformed reply.
TextEmbedding encode_external(const std::string& text, const ExternalEncoderConfig& config);

// Trainable word-bag sentence embedding for the end-to-end ablation.
// encode() averages the rows of the embedding table over the sentence's
// known tokens; accumulate_gradient() scatters d(loss)/d(embedding) back.
class WordBagEncoder {
 public:
  WordBagEncoder(const std::vector<std::string>& vocabulary, Index dim, std::uint64_t seed);

  Vec encode(const std::string& text) const;
  void accumulate_gradient(const std::string& text, const Vec& d_embedding);

  Mat& table() { return table_; }
  Mat& gradient() { return grad_; }
  Index dim() const { return table_.cols(); }
  const std::vector<std::string>& vocabulary() const { return vocab_; }

 private:
  std::vector<Index> token_rows(const std::string& text) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, Index> index_;
  Mat table_;  // (V+1) x dim, last row is the unknown-token slot
  Mat grad_;
};

std::vector<std::string> tokenize_whitespace(const std::string& text);

}  // namespace signmotion
