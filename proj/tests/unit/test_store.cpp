#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "fuselm/error.hpp"
#include "fuselm/store.hpp"
#include "test_support.hpp"

using namespace fuselm;

namespace {

std::vector<float> vec(std::uint32_t dim, float base) {
  std::vector<float> v(dim);
  for (std::uint32_t i = 0; i < dim; ++i) v[i] = base + 0.25f * static_cast<float>(i);
  return v;
}

// Two sentences with prefix lengths 0..2 and 0..1.
std::vector<StoreRecord> prefix_records(std::uint32_t dim) {
  return {{{0, 0}, vec(dim, 0)}, {{0, 1}, vec(dim, 1)}, {{0, 2}, vec(dim, 2)},
          {{1, 0}, vec(dim, 10)}, {{1, 1}, vec(dim, 11)}};
}

StoreHeader header(StoreKind kind, std::uint32_t dim, CropSpec crop = {}) {
  StoreHeader h;
  h.kind = kind;
  h.dim = dim;
  h.crop = crop;
  return h;
}

// Hand-built record bytes, bypassing encode_store's checks.
std::string raw_store(StoreKind kind, std::uint32_t dim, const std::vector<StoreRecord>& records) {
  auto bytes = encode_store(header(kind, dim), {});
  const std::uint64_t count = records.size();
  std::memcpy(bytes.data() + 19, &count, 8);
  for (const auto& r : records) {
    bytes.append(reinterpret_cast<const char*>(&r.key.sentence_idx), 8);
    bytes.append(reinterpret_cast<const char*>(&r.key.prefix_len), 4);
    bytes.append(reinterpret_cast<const char*>(r.values.data()), 4 * r.values.size());
  }
  return bytes;
}

}  // namespace

TEST_SUITE("store") {
  TEST_CASE("header layout is 27 bytes little-endian") {
    const auto bytes = encode_store(header(StoreKind::DensePrefix, 3, CropSpec::right(0.5)), prefix_records(3));
    REQUIRE(bytes.size() == ArtefactStore::kHeaderBytes + 5 * (12 + 4 * 3));
    CHECK(bytes.substr(0, 4) == "ARTF");
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == 0);
    CHECK(bytes.substr(9, 3) == std::string(3, '\0'));
    CHECK(bytes[12] == 3);
    CHECK(bytes[16] == 1);
    std::uint16_t pct = 0;
    std::memcpy(&pct, bytes.data() + 17, 2);
    CHECK(pct == 500);
    std::uint64_t count = 0;
    std::memcpy(&count, bytes.data() + 19, 8);
    CHECK(count == 5);
  }

  TEST_CASE("round trip through a file") {
    testing::TempDir dir("store");
    auto records = prefix_records(4);
    std::swap(records[0], records[4]);  // writer sorts
    write_store(dir / "s.artf", header(StoreKind::DensePrefix, 4), records);
    const auto store = ArtefactStore::open(dir / "s.artf");
    CHECK(store.dim() == 4);
    CHECK(store.size() == 5);
    CHECK(store.num_sentences() == 2);
    CHECK(store.header().kind == StoreKind::DensePrefix);
    for (const auto& r : prefix_records(4)) {
      const auto a = store.lookup(r.key.sentence_idx, r.key.prefix_len);
      CHECK(a.kind == ArtefactKind::DensePrefix);
      REQUIRE(a.dim() == 4);
      for (std::size_t i = 0; i < 4; ++i) CHECK(a.values[i] == static_cast<double>(r.values[i]));
    }
  }

  TEST_CASE("repeated lookups are bitwise identical") {
    const auto store = ArtefactStore::parse(encode_store(header(StoreKind::DensePrefix, 768), prefix_records(768)));
    const auto a = store.lookup(0, 2);
    const auto b = store.lookup(0, 2);
    REQUIRE(a.values.size() == b.values.size());
    CHECK(std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0);
  }

  TEST_CASE("missing key is a lookup error naming the key") {
    const auto store = ArtefactStore::parse(encode_store(header(StoreKind::DensePrefix, 2), prefix_records(2)));
    CHECK_THROWS_AS(store.lookup(1, 2), LookupError);
    try {
      store.lookup(7, 3);
      FAIL("expected LookupError");
    } catch (const LookupError& e) {
      CHECK(std::string(e.what()).find("sentence_idx=7, prefix_len=3") != std::string::npos);
    }
  }

  TEST_CASE("record dimension disagreeing with the header is rejected") {
    auto records = prefix_records(768);
    records[2].values.pop_back();
    CHECK_THROWS_AS(encode_store(header(StoreKind::DensePrefix, 768), records), ConfigError);
    // On disk: a 767-wide payload under a 768 header does not add up.
    auto bytes = raw_store(StoreKind::DensePrefix, 768, {{{0, 0}, vec(767, 0)}});
    CHECK_THROWS_AS(ArtefactStore::parse(bytes), FormatError);
  }

  TEST_CASE("writer rejects duplicates and non-finite values") {
    auto dup = prefix_records(2);
    dup.push_back(dup[1]);
    CHECK_THROWS_AS(encode_store(header(StoreKind::DensePrefix, 2), dup), ConfigError);
    auto nan = prefix_records(2);
    nan[0].values[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(encode_store(header(StoreKind::DensePrefix, 2), nan), ConfigError);
    CHECK_THROWS_AS(encode_store(header(StoreKind::DenseFull, 2, CropSpec::right(0.5)), {}), FormatError);
  }

  TEST_CASE("header fields are validated") {
    const auto good = encode_store(header(StoreKind::DensePrefix, 2), prefix_records(2));
    CHECK_NOTHROW(ArtefactStore::parse(good));
    auto mutate = [&](std::size_t offset, char value) {
      auto b = good;
      b[offset] = value;
      return b;
    };
    CHECK_THROWS_AS(ArtefactStore::parse(mutate(0, 'X')), FormatError);      // magic
    CHECK_THROWS_AS(ArtefactStore::parse(mutate(4, 2)), FormatError);        // version
    CHECK_THROWS_AS(ArtefactStore::parse(mutate(8, 3)), FormatError);        // kind
    CHECK_THROWS_AS(ArtefactStore::parse(mutate(10, 1)), FormatError);       // reserved
    CHECK_THROWS_AS(ArtefactStore::parse(mutate(16, 3)), FormatError);       // side
    CHECK_THROWS_AS(ArtefactStore::parse(mutate(17, 5)), FormatError);       // pct without side
    auto big_pct = mutate(16, 1);
    const std::uint16_t over = 1001;
    std::memcpy(big_pct.data() + 17, &over, 2);
    CHECK_THROWS_AS(ArtefactStore::parse(big_pct), FormatError);
    auto zero_dim = good;
    std::memset(zero_dim.data() + 12, 0, 4);
    CHECK_THROWS_AS(ArtefactStore::parse(zero_dim), FormatError);
    CHECK_THROWS_AS(ArtefactStore::parse(good.substr(0, good.size() - 1)), FormatError);
    CHECK_THROWS_AS(ArtefactStore::parse(good + "x"), FormatError);
    CHECK_THROWS_AS(ArtefactStore::parse(good.substr(0, 20)), FormatError);
  }

  TEST_CASE("record order and prefix coverage are validated") {
    using K = StoreKind;
    CHECK_THROWS_AS(ArtefactStore::parse(raw_store(K::DensePrefix, 1, {{{0, 1}, {1}}, {{0, 0}, {1}}})), FormatError);
    CHECK_THROWS_AS(ArtefactStore::parse(raw_store(K::DensePrefix, 1, {{{0, 0}, {1}}, {{0, 0}, {1}}})), FormatError);
    CHECK_THROWS_AS(ArtefactStore::parse(raw_store(K::DensePrefix, 1, {{{0, 0}, {1}}, {{0, 2}, {1}}})), FormatError);
    CHECK_THROWS_AS(ArtefactStore::parse(raw_store(K::DensePrefix, 1, {{{0, 0}, {1}}, {{1, 1}, {1}}})), FormatError);
    CHECK_THROWS_AS(ArtefactStore::parse(raw_store(K::DenseFull, 1, {{{0, 1}, {1}}})), FormatError);
    CHECK_THROWS_AS(ArtefactStore::parse(raw_store(K::DensePrefix, 1, {{{0, 0}, {std::numeric_limits<float>::infinity()}}})),
                    FormatError);
    // Sentences may be skipped; only prefixes within a sentence must be dense.
    CHECK_NOTHROW(ArtefactStore::parse(raw_store(K::DensePrefix, 1, {{{0, 0}, {1}}, {{5, 0}, {1}}})));
  }

  TEST_CASE("dense-full lookups ignore the prefix length") {
    const auto store = ArtefactStore::parse(
        encode_store(header(StoreKind::DenseFull, 2), {{{0, 0}, {1, 2}}, {{1, 0}, {3, 4}}}));
    for (std::uint32_t p : {0u, 1u, 9u}) {
      const auto a = store.lookup(1, p);
      CHECK(a.kind == ArtefactKind::DenseFull);
      CHECK(a.values == std::vector<double>{3, 4});
    }
  }
}
