#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "layerprobe/embedding.hpp"
#include "layerprobe/error.hpp"
#include "support.hpp"

using namespace layerprobe;

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_SUITE("embedding") {
  TEST_CASE("one frame of dim 2: header plus 8 payload bytes, round trip") {
    testsupport::TempDir dir("emb");
    const EmbeddingSequence seq("rec", 0, 2, 50.0F, {0.0F, 1.0F});
    const auto path = dir / embedding_file_name("rec", 0);
    write_embedding_file(seq, path);
    CHECK(std::filesystem::file_size(path) == embedding_header_size("rec") + 8);
    CHECK(embedding_header_size("rec") == 22 + 3);
    CHECK(read_embedding_file(path) == seq);
  }

  TEST_CASE("header layout is byte exact") {
    const EmbeddingSequence seq("ab", 3, 1, 2.0F, {1.0F});
    const auto bytes = encode_embedding(seq);
    const std::vector<std::uint8_t> expected = {
        'L', 'P', 'R', 'B',      // magic
        1, 0,                    // version
        3, 0,                    // layer
        1, 0, 0, 0,              // dim
        1, 0, 0, 0,              // n_frames
        0x00, 0x00, 0x00, 0x40,  // 2.0f
        2, 0, 'a', 'b',          // id
        0x00, 0x00, 0x80, 0x3F,  // 1.0f
    };
    CHECK(bytes == expected);
  }

  TEST_CASE("payload size for 1000 x 1024 is 4*1000*1024 bytes") {
    std::vector<float> data(1000 * 1024, 0.25F);
    const EmbeddingSequence seq("big", 7, 1024, 50.0F, std::move(data));
    const auto bytes = encode_embedding(seq);
    CHECK(bytes.size() - embedding_header_size("big") == 4U * 1000U * 1024U);
  }

  TEST_CASE("non-finite values are rejected") {
    CHECK_THROWS_AS(EmbeddingSequence("x", 0, 2, 1.0F,
                                      {0.0F, std::numeric_limits<float>::quiet_NaN()}),
                    Error);
    CHECK_THROWS_AS(EmbeddingSequence("x", 0, 1, 1.0F,
                                      {std::numeric_limits<float>::infinity()}),
                    Error);
  }

  TEST_CASE("shape and rate invariants") {
    CHECK_THROWS_AS(EmbeddingSequence("x", 0, 0, 1.0F, {1.0F}), Error);
    CHECK_THROWS_AS(EmbeddingSequence("x", 0, 2, 1.0F, {1.0F, 2.0F, 3.0F}), Error);
    CHECK_THROWS_AS(EmbeddingSequence("x", 0, 1, 0.0F, {1.0F}), Error);
    CHECK_THROWS_AS(EmbeddingSequence("x", 0, 1, 1.0F, {}), Error);
  }

  TEST_CASE("bad magic") {
    testsupport::TempDir dir("emb");
    const auto path = dir / "m.lpb";
    write_embedding_file(EmbeddingSequence("m", 0, 1, 1.0F, {1.0F}), path);
    auto bytes = slurp(path);
    bytes[0] = 'X';
    dump(path, bytes);
    CHECK_THROWS_WITH_AS(read_embedding_file(path), doctest::Contains("bad magic"), Error);
  }

  TEST_CASE("unsupported version") {
    auto bytes = encode_embedding(EmbeddingSequence("v", 0, 1, 1.0F, {1.0F}));
    bytes[4] = 2;
    CHECK_THROWS_WITH_AS(decode_embedding(bytes), doctest::Contains("unsupported version 2"),
                         Error);
  }

  TEST_CASE("truncated by 4 bytes names expected and actual counts") {
    testsupport::TempDir dir("emb");
    const auto path = dir / "t.lpb";
    write_embedding_file(EmbeddingSequence("t", 0, 2, 1.0F, {1, 2, 3, 4, 5, 6}), path);
    auto bytes = slurp(path);
    bytes.resize(bytes.size() - 4);
    dump(path, bytes);
    CHECK_THROWS_WITH_AS(read_embedding_file(path),
                         doctest::Contains("truncated payload: expected 24 bytes, found 20"),
                         Error);
  }

  TEST_CASE("header cut short") {
    auto bytes = encode_embedding(EmbeddingSequence("h", 0, 1, 1.0F, {1.0F}));
    bytes.resize(10);
    CHECK_THROWS_WITH_AS(decode_embedding(bytes), doctest::Contains("corrupt header"), Error);
  }

  TEST_CASE("round trip is bit exact for random sequences") {
    std::mt19937 gen(11);
    std::uniform_int_distribution<int> dims(1, 9);
    std::uniform_int_distribution<int> frames(1, 40);
    std::uniform_int_distribution<std::uint32_t> bits(0, 0xFFFFFFFFU);
    for (int trial = 0; trial < 200; ++trial) {
      const int d = dims(gen);
      const int n = frames(gen);
      std::vector<float> data(static_cast<std::size_t>(d * n));
      for (auto& v : data) {
        float f;
        do {
          f = std::bit_cast<float>(bits(gen));  // arbitrary finite bit patterns
        } while (!std::isfinite(f));
        v = f;
      }
      const EmbeddingSequence seq("r" + std::to_string(trial), static_cast<std::uint32_t>(trial),
                                  static_cast<std::size_t>(d), 49.5F, data);
      const auto back = decode_embedding(encode_embedding(seq));
      REQUIRE(back.n_frames() == seq.n_frames());
      CHECK(std::memcmp(back.data().data(), data.data(), data.size() * 4) == 0);
      CHECK(back.recording_id() == seq.recording_id());
      CHECK(back.layer_index() == seq.layer_index());
      CHECK(back.frame_hz() == seq.frame_hz());
    }
  }

  TEST_CASE("file naming and store lookup") {
    CHECK(embedding_file_name("spk1_r0", 3) == "spk1_r0.layer03.lpb");
    CHECK(embedding_file_name("a", 12) == "a.layer12.lpb");
    CHECK(embedding_file_name("a", 123) == "a.layer123.lpb");

    testsupport::TempDir dir("store");
    for (std::uint32_t layer : {0U, 2U, 10U}) {
      write_embedding_file(EmbeddingSequence("rec", layer, 1, 1.0F, {1.0F}),
                           dir / embedding_file_name("rec", layer));
    }
    write_embedding_file(EmbeddingSequence("rec2", 1, 1, 1.0F, {1.0F}),
                         dir / embedding_file_name("rec2", 1));
    const EmbeddingStore store(dir.path());
    CHECK(store.layers_for("rec") == std::vector<std::uint32_t>{0, 2, 10});
    CHECK(store.contains("rec", 2));
    CHECK_FALSE(store.contains("rec", 1));
    const auto a = store.load("rec", 2);
    const auto b = store.load("rec", 2);
    CHECK(a.get() == b.get());
    CHECK(a->layer_index() == 2);
  }

  TEST_CASE("store rejects a file whose header disagrees with its name") {
    testsupport::TempDir dir("store");
    write_embedding_file(EmbeddingSequence("other", 0, 1, 1.0F, {1.0F}),
                         dir / embedding_file_name("rec", 0));
    const EmbeddingStore store(dir.path());
    CHECK_THROWS_AS(store.load("rec", 0), Error);
  }
}
