#include "signmotion/text_encoding.hpp"

#include "signmotion/errors.hpp"
#include "signmotion/random.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace signmotion {

std::vector<std::string> tokenize_whitespace(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

TextEmbedding encode_toy(const std::string& text, Index dim) {
  const auto tokens = tokenize_whitespace(text);
  if (tokens.empty()) throw DegenerateInputError("encode_toy: empty text");
  Vec sum = Vec::Zero(dim);
  for (const auto& token : tokens) {
    Rng rng(fnv1a64(token));
    Vec v = rng.gaussian_vector(dim);
    sum += v / v.norm();
  }
  sum /= static_cast<Scalar>(tokens.size());
  TextEmbedding out;
  out.vector = sum / sum.norm();
  out.source = TextSource::toy;
  return out;
}

// --- SHA-256 (FIPS 180-4) ----------------------------------------------------

namespace {

constexpr std::array<std::uint32_t, 64> kSha256K = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1,
    0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3,
    0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786,
    0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
    0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13,
    0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
    0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a,
    0x5b9cca4f, 0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
    0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

inline std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

}  // namespace

std::string sha256_hex(std::string_view data) {
  std::array<std::uint32_t, 8> h = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                                    0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  std::string msg(data);
  const std::uint64_t bit_len = static_cast<std::uint64_t>(msg.size()) * 8;
  msg.push_back(static_cast<char>(0x80));
  while (msg.size() % 64 != 56) msg.push_back('\0');
  for (int i = 7; i >= 0; --i)
    msg.push_back(static_cast<char>((bit_len >> (8 * i)) & 0xff));

  for (std::size_t block = 0; block < msg.size(); block += 64) {
    std::array<std::uint32_t, 64> w{};
    for (int i = 0; i < 16; ++i)
      w[i] = (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[block + 4 * i])) << 24) |
             (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[block + 4 * i + 1])) << 16) |
             (static_cast<std::uint32_t>(static_cast<unsigned char>(msg[block + 4 * i + 2])) << 8) |
             static_cast<std::uint32_t>(static_cast<unsigned char>(msg[block + 4 * i + 3]));
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, hh] = h;
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = hh + s1 + ch + kSha256K[i] + w[i];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = s0 + maj;
      hh = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    h = {h[0] + a, h[1] + b, h[2] + c, h[3] + d, h[4] + e, h[5] + f, h[6] + g, h[7] + hh};
  }

  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint32_t word : h)
    for (int i = 7; i >= 0; --i) out.push_back(hex[(word >> (4 * i)) & 0xf]);
  return out;
}

// --- external encoder ---------------------------------------------------------

namespace {

Vec parse_embedding(const nlohmann::json& j, Index dim, const char* origin) {
  if (!j.contains("embedding") || !j["embedding"].is_array())
    throw ProtocolError(std::string(origin) + ": reply lacks 'embedding' array");
  const auto& arr = j["embedding"];
  if (static_cast<Index>(arr.size()) != dim)
    throw ProtocolError(std::string(origin) + ": embedding has " +
                        std::to_string(arr.size()) + " values, expected " +
                        std::to_string(dim));
  Vec v(dim);
  for (Index i = 0; i < dim; ++i) {
    if (!arr[i].is_number())
      throw ProtocolError(std::string(origin) + ": non-numeric embedding entry");
    v(i) = arr[i].get<double>();
  }
  if (!v.allFinite()) throw ProtocolError(std::string(origin) + ": non-finite embedding");
  return v;
}

}  // namespace

TextEmbedding encode_external(const std::string& text, const ExternalEncoderConfig& config) {
  if (tokenize_whitespace(text).empty())
    throw DegenerateInputError("encode_external: empty text");
  const std::filesystem::path cache_file =
      config.cache_dir / (sha256_hex(text) + ".json");

  if (std::filesystem::exists(cache_file)) {
    std::ifstream is(cache_file);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("encode_external: corrupt cache entry: " + std::string(e.what()));
    }
    TextEmbedding out;
    out.vector = parse_embedding(j, config.dim, "cache");
    out.source = TextSource::external;
    return out;
  }

  httplib::Client client(config.endpoint);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  const nlohmann::json request = {{"text", text}};
  auto res = client.Post("/embed", request.dump(), "application/json");
  if (!res)
    throw UnavailableError("encode_external: cannot reach '" + config.endpoint +
                           "' and no cache entry exists");
  if (res->status != 200)
    throw ProtocolError("encode_external: endpoint returned status " +
                        std::to_string(res->status));
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError("encode_external: invalid JSON reply: " + std::string(e.what()));
  }
  TextEmbedding out;
  out.vector = parse_embedding(reply, config.dim, "endpoint");
  out.source = TextSource::external;

  // Atomic cache write: temp file then rename.
  std::filesystem::create_directories(config.cache_dir);
  const std::filesystem::path tmp = cache_file.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw FormatError("encode_external: cannot write cache");
    nlohmann::json entry;
    entry["text"] = text;
    entry["embedding"] = std::vector<double>(out.vector.data(),
                                             out.vector.data() + out.vector.size());
    os << entry.dump() << "\n";
  }
  std::filesystem::rename(tmp, cache_file);
  return out;
}

// --- word-bag encoder ----------------------------------------------------------

WordBagEncoder::WordBagEncoder(const std::vector<std::string>& vocabulary, Index dim,
                               std::uint64_t seed)
    : vocab_(vocabulary) {
  for (std::size_t i = 0; i < vocab_.size(); ++i)
    index_[vocab_[i]] = static_cast<Index>(i);
  Rng rng(seed);
  const Index rows = static_cast<Index>(vocab_.size()) + 1;
  table_ = rng.gaussian(rows, dim) * 0.1;
  grad_ = Mat::Zero(rows, dim);
}

std::vector<Index> WordBagEncoder::token_rows(const std::string& text) const {
  const auto tokens = tokenize_whitespace(text);
  if (tokens.empty()) throw DegenerateInputError("word_bag: empty text");
  std::vector<Index> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = index_.find(t);
    rows.push_back(it == index_.end() ? table_.rows() - 1 : it->second);
  }
  return rows;
}

Vec WordBagEncoder::encode(const std::string& text) const {
  const auto rows = token_rows(text);
  Vec sum = Vec::Zero(table_.cols());
  for (Index r : rows) sum += table_.row(r).transpose();
  return sum / static_cast<Scalar>(rows.size());
}

void WordBagEncoder::accumulate_gradient(const std::string& text, const Vec& d_embedding) {
  const auto rows = token_rows(text);
  const Vec share = d_embedding / static_cast<Scalar>(rows.size());
  for (Index r : rows) grad_.row(r) += share.transpose();
}

}  // namespace signmotion
