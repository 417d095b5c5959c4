#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/testutil.hpp"
#include "vmb/embedding.hpp"
#include "vmb/errors.hpp"

using namespace vmb;

namespace {

EmbeddingVector vec(std::initializer_list<double> values,
                    EmbeddingSpace space = EmbeddingSpace::audio) {
  return EmbeddingVector(std::vector<double>(values), space);
}

}  // namespace

TEST_CASE("cosine similarity on analytic pairs") {
  CHECK(cosine_similarity(vec({1, 0}), vec({1, 0})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK(cosine_similarity(vec({1, 1}), vec({1, 0})) ==
        doctest::Approx(0.7071067811865475).epsilon(1e-15));
  // symmetric
  CHECK(cosine_similarity(vec({0.2, -0.4, 1.0}), vec({0.5, 0.1, -0.3})) ==
        cosine_similarity(vec({0.5, 0.1, -0.3}), vec({0.2, -0.4, 1.0})));
}

TEST_CASE("cosine similarity rejects bad inputs") {
  CHECK_THROWS_AS(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), DimensionError);
  CHECK_THROWS_AS(cosine_similarity(vec({0, 0}), vec({1, 0})), DegenerateVectorError);
  CHECK_THROWS_AS(cosine_similarity(vec({1, 0}), vec({0, 0})), DegenerateVectorError);
  CHECK_THROWS_AS(
      cosine_similarity(vec({1, 0}, EmbeddingSpace::audio), vec({1, 0}, EmbeddingSpace::text)),
      DimensionError);
}

TEST_CASE("cosine similarity: Cauchy-Schwarz and scale invariance properties") {
  SeededRng rng(11);
  for (int i = 0; i < 500; ++i) {
    size_t dim = 2 + rng.below(17);
    EmbeddingVector a, b;
    a.values.resize(dim);
    b.values.resize(dim);
    for (double& x : a.values) x = 3.0 * rng.normal();
    for (double& x : b.values) x = 0.1 * rng.normal();
    if (a.l2_norm() == 0.0 || b.l2_norm() == 0.0) continue;
    double c = cosine_similarity(a, b);
    CHECK(c >= -1.0 - 1e-12);
    CHECK(c <= 1.0 + 1e-12);
    for (double k : {0.5, 2.0, 1000.0}) {
      EmbeddingVector ka = a;
      for (double& x : ka.values) x *= k;
      CHECK(cosine_similarity(ka, b) == doctest::Approx(c).epsilon(1e-12));
    }
  }
}

TEST_CASE("normalize") {
  EmbeddingVector n = normalize(vec({3, 4}));
  CHECK(n.values[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n.values[1] == doctest::Approx(0.8).epsilon(1e-15));
  // idempotent
  EmbeddingVector n2 = normalize(n);
  CHECK(std::abs(n2.values[0] - n.values[0]) < 1e-15);
  CHECK(std::abs(n2.values[1] - n.values[1]) < 1e-15);
  CHECK(std::abs(n.l2_norm() - 1.0) < 1e-9);
  CHECK_THROWS_AS(normalize(vec({0, 0})), DegenerateVectorError);
}

TEST_CASE("stub_embed determinism and unit norm") {
  EmbeddingVector a = stub_embed("some track", EmbeddingSpace::audio, 64, 9);
  EmbeddingVector b = stub_embed("some track", EmbeddingSpace::audio, 64, 9);
  CHECK(a.values == b.values);  // bitwise
  CHECK(std::abs(a.l2_norm() - 1.0) < 1e-9);

  // distinct inputs land elsewhere
  CHECK(stub_embed("some track", EmbeddingSpace::audio, 64, 10).values != a.values);
  CHECK(stub_embed("some track", EmbeddingSpace::text, 64, 9).values != a.values);
  CHECK(stub_embed("other track", EmbeddingSpace::audio, 64, 9).values != a.values);

  CHECK_THROWS_AS(stub_embed("x", EmbeddingSpace::audio, 1, 0), ConfigError);
}

TEST_CASE("stub_embed: distinct contents are never near-collinear (1000 pairs)") {
  double max_abs_cos = 0.0;
  for (int i = 0; i < 1000; ++i) {
    EmbeddingVector a =
        stub_embed("content-a-" + std::to_string(i), EmbeddingSpace::audio, 64, 0);
    EmbeddingVector b =
        stub_embed("content-b-" + std::to_string(i), EmbeddingSpace::audio, 64, 0);
    max_abs_cos = std::max(max_abs_cos, std::abs(cosine_similarity(a, b)));
  }
  CHECK(max_abs_cos < 0.999);
}

TEST_CASE("store: insert validation") {
  EmbeddingStore store(EmbeddingSpace::audio, 2);
  store.insert("a", vec({1, 0}));
  CHECK_THROWS_AS(store.insert("a", vec({0, 1})), ValidationError);
  CHECK_THROWS_AS(store.insert("", vec({0, 1})), ValidationError);
  CHECK_THROWS_AS(store.insert("b", vec({0, 1, 2})), ValidationError);
  CHECK_THROWS_AS(store.insert("c", vec({0, 1}, EmbeddingSpace::text)), ValidationError);
  CHECK_THROWS_AS(store.at("nope"), ValidationError);
}

TEST_CASE("store file round trip is the identity on f32-exact payloads") {
  vmbtest::TempDir dir("store");
  EmbeddingStore store(EmbeddingSpace::text, 3);
  store.insert("first", vec({0.5, -0.25, 1.0}, EmbeddingSpace::text));
  store.insert("second", vec({2.0, 0.0, -8.0}, EmbeddingSpace::text));
  store.insert("third", vec({0.125, 3.5, 0.75}, EmbeddingSpace::text));

  auto path = dir.file("t.vmbe");
  save_store(store, path);
  EmbeddingStore loaded = load_store(path);
  CHECK(loaded == store);

  // file-level round trip is bitwise for any store
  save_store(loaded, dir.file("t2.vmbe"));
  CHECK(vmbtest::read_bytes(dir.file("t2.vmbe")) == vmbtest::read_bytes(path));
}

TEST_CASE("store file: corruption cases") {
  vmbtest::TempDir dir("storebad");
  EmbeddingStore store(EmbeddingSpace::audio, 2);
  store.insert("a", vec({1, 0}));
  store.insert("b", vec({0, 1}));
  auto path = dir.file("s.vmbe");
  save_store(store, path);
  std::string bytes = vmbtest::read_bytes(path);

  SUBCASE("truncated file") {
    CHECK_THROWS_AS(decode_store(bytes.substr(0, bytes.size() - 3)), FormatError);
  }
  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_store(bad), FormatError);
  }
  SUBCASE("version mismatch") {
    std::string bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(decode_store(bad), FormatError);
  }
  SUBCASE("duplicate id names the id") {
    // duplicate entry "a": rebuild with count 2 but entry a twice
    EmbeddingStore one(EmbeddingSpace::audio, 2);
    one.insert("a", vec({1, 0}));
    std::string single = encode_store(one);
    // header is 19 bytes; splice the entry twice and bump the count
    std::string entry = single.substr(19);
    std::string doubled = single.substr(0, 19) + entry + entry;
    doubled[11] = 2;  // count u64 little-endian low byte
    try {
      decode_store(doubled);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("\"a\"") != std::string::npos);
    }
  }
  SUBCASE("missing file is an io error") {
    CHECK_THROWS_AS(load_store(dir.file("missing.vmbe")), IoError);
  }
}

TEST_CASE("store round trip preserves stub vectors after one quantization") {
  // Stub vectors are double precision; the first save quantizes to f32 and
  // reload+save is then bitwise stable.
  vmbtest::TempDir dir("storestub");
  EmbeddingStore store(EmbeddingSpace::audio, 16);
  for (int i = 0; i < 5; ++i) {
    store.insert("id" + std::to_string(i),
                 stub_embed("content" + std::to_string(i), EmbeddingSpace::audio, 16, 3));
  }
  save_store(store, dir.file("a.vmbe"));
  EmbeddingStore l1 = load_store(dir.file("a.vmbe"));
  save_store(l1, dir.file("b.vmbe"));
  EmbeddingStore l2 = load_store(dir.file("b.vmbe"));
  CHECK(l1 == l2);
  CHECK(vmbtest::read_bytes(dir.file("a.vmbe")) == vmbtest::read_bytes(dir.file("b.vmbe")));
}
