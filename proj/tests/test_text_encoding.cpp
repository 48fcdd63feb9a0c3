#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "signmotion/errors.hpp"
#include "signmotion/text_encoding.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <filesystem>
#include <thread>

using namespace signmotion;

TEST_CASE("toy encoder determinism and unit norm") {
  const auto a = encode_toy("hello little sign");
  const auto b = encode_toy("hello little sign");
  CHECK(a.vector == b.vector);
  CHECK(a.vector.size() == 768);
  CHECK(a.vector.norm() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(a.source == TextSource::toy);
  CHECK_THROWS_AS(encode_toy(""), DegenerateInputError);
  CHECK_THROWS_AS(encode_toy("   "), DegenerateInputError);
}

TEST_CASE("disjoint vocabularies stay dissimilar") {
  for (int pair = 0; pair < 100; ++pair) {
    const std::string a = "alpha" + std::to_string(pair) + " beta" + std::to_string(pair) +
                          " gamma" + std::to_string(pair);
    const std::string b = "delta" + std::to_string(pair) + " epsilon" +
                          std::to_string(pair) + " zeta" + std::to_string(pair);
    const Scalar cosine = encode_toy(a).vector.dot(encode_toy(b).vector);
    CHECK(std::abs(cosine) < 0.5);
  }
}

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("The quick brown fox jumps over the lazy dog") ==
        "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
}

namespace {

struct MockServer {
  httplib::Server server;
  std::thread thread;
  std::atomic<int> hits{0};
  int port = 0;
  Index reply_dim = 768;

  MockServer() {
    server.Post("/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      const auto body = nlohmann::json::parse(req.body);
      std::vector<double> embedding(reply_dim, 0.0);
      // Deterministic, text-dependent reply.
      embedding[0] = static_cast<double>(body.at("text").get<std::string>().size());
      embedding[reply_dim - 1] = 0.25;
      res.set_content(nlohmann::json{{"embedding", embedding}}.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~MockServer() {
    server.stop();
    thread.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port); }
};

std::filesystem::path fresh_cache_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sm_text_cache" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("external encoder returns the endpoint's vector and caches it") {
  MockServer mock;
  ExternalEncoderConfig config{mock.endpoint(), fresh_cache_dir("basic"), 768};

  const auto first = encode_external("hello signs", config);
  CHECK(first.source == TextSource::external);
  CHECK(first.vector.size() == 768);
  CHECK(first.vector(0) == doctest::Approx(11.0));
  CHECK(first.vector(767) == doctest::Approx(0.25));
  CHECK(mock.hits == 1);

  // Cache hit: identical result, no network traffic.
  const auto second = encode_external("hello signs", config);
  CHECK(second.vector == first.vector);
  CHECK(mock.hits == 1);

  // The cache survives without any server at all.
  ExternalEncoderConfig offline{"http://127.0.0.1:1", config.cache_dir, 768};
  const auto third = encode_external("hello signs", offline);
  CHECK(third.vector == first.vector);
}

TEST_CASE("wrong embedding width is a protocol error") {
  MockServer mock;
  mock.reply_dim = 512;
  ExternalEncoderConfig config{mock.endpoint(), fresh_cache_dir("width"), 768};
  CHECK_THROWS_AS(encode_external("some text", config), ProtocolError);
}

TEST_CASE("unreachable endpoint without cache is unavailable") {
  ExternalEncoderConfig config{"http://127.0.0.1:1", fresh_cache_dir("missing"), 768};
  CHECK_THROWS_AS(encode_external("uncached text", config), UnavailableError);
}

TEST_CASE("word bag encoder averages known rows and routes gradients") {
  WordBagEncoder bag({"walk", "run", "stop"}, 16, 5);
  const Vec walk = bag.table().row(0).transpose();
  const Vec run = bag.table().row(1).transpose();
  CHECK((bag.encode("walk run") - 0.5 * (walk + run)).norm() < 1e-12);

  // Unknown words hit the shared fallback row.
  const Vec unk = bag.table().row(3).transpose();
  CHECK((bag.encode("jetpack") - unk).norm() < 1e-12);

  const Vec d = Vec::Ones(16);
  bag.accumulate_gradient("walk run", d);
  CHECK((bag.gradient().row(0).transpose() - 0.5 * d).norm() < 1e-12);
  CHECK((bag.gradient().row(1).transpose() - 0.5 * d).norm() < 1e-12);
  CHECK(bag.gradient().row(2).norm() == 0.0);
}
