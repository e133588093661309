#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fuselm/corpus.hpp"
#include "fuselm/error.hpp"
#include "test_support.hpp"

using namespace fuselm;

TEST_SUITE("corpus") {
  TEST_CASE("empty lines are dropped and order kept") {
    testing::TempDir dir("corpus");
    testing::write_text(dir / "c.txt", "a\n\nb\n");
    const auto c = load_corpus(dir / "c.txt");
    CHECK(c.sentences == std::vector<std::string>{"a", "b"});
    CHECK(c.name == "c");
  }

  TEST_CASE("whitespace-only lines and carriage returns") {
    testing::TempDir dir("corpus");
    testing::write_text(dir / "c.txt", "a\r\n  \r\n\tb c\r\nlast");
    const auto c = load_corpus(dir / "c.txt");
    CHECK(c.sentences == std::vector<std::string>{"a", "\tb c", "last"});
  }

  TEST_CASE("limit keeps the first surviving lines") {
    testing::TempDir dir("corpus");
    testing::write_text(dir / "c.txt", "a\n\nb\nc\n");
    CHECK(load_corpus(dir / "c.txt", 2).sentences == std::vector<std::string>{"a", "b"});
    CHECK(load_corpus(dir / "c.txt", 0).empty());
    CHECK(load_corpus(dir / "c.txt", 99).size() == 3);
  }

  TEST_CASE("unreadable or malformed files are io errors") {
    testing::TempDir dir("corpus");
    CHECK_THROWS_AS(load_corpus(dir / "missing.txt"), IoError);
    testing::write_text(dir / "bad.txt", "ok\n\xC3\x28\n");
    CHECK_THROWS_AS(load_corpus(dir / "bad.txt"), IoError);
  }

  TEST_CASE("batch framing") {
    const std::vector<std::string> train{"abab", "ab"};
    const auto v = Vocab::train(train, 6);
    const auto b = make_batch(v, 7, "ab");
    CHECK(b.sentence_idx == 7);
    CHECK(b.ids == std::vector<TokenId>{Vocab::kBos, *v.find("ab"), Vocab::kEos});
    CHECK(b.num_targets() == 2);
    CHECK(b.body().size() == 1);
  }

  TEST_CASE("a ten-subword sentence yields eleven targets") {
    const std::vector<std::string> train{"abcdefghij"};
    const auto v = Vocab::train(train, 13);  // base alphabet only
    const auto b = make_batch(v, 0, "abcdefghij");
    CHECK(b.body().size() == 10);
    CHECK(b.num_targets() == 11);
  }

  TEST_CASE("batches frame every sentence and count targets") {
    const auto corpus = make_corpus({"the cat", "", "a dog sat", "x"});
    const auto v = Vocab::train(corpus.sentences, 20);
    const auto all = batches(corpus, v);
    REQUIRE(all.size() == 3);
    std::size_t targets = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
      const auto& ids = all[i].ids;
      CHECK(all[i].sentence_idx == i);
      CHECK(ids.front() == Vocab::kBos);
      CHECK(ids.back() == Vocab::kEos);
      CHECK(std::count(ids.begin(), ids.end(), Vocab::kBos) == 1);
      CHECK(std::count(ids.begin(), ids.end(), Vocab::kEos) == 1);
      targets += all[i].num_targets();
      CHECK(all[i].num_targets() == v.encode(corpus.sentences[i]).size() + 1);
    }
    CHECK(count_targets(corpus, v) == targets);
  }

  TEST_CASE("empty corpus gives an empty stream") {
    const Corpus c;
    const std::vector<std::string> train{"a"};
    const auto v = Vocab::train(train, 4);
    BatchStream stream(c, v);
    CHECK_FALSE(stream.next().has_value());
    CHECK(batches(c, v).empty());
  }

  TEST_CASE("epoch order: identity, seeded permutation, epoch dependence") {
    const auto id = epoch_order(10, false, 1, 3);
    std::vector<std::size_t> expect(10);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(id == expect);

    const auto a = epoch_order(50, true, 1, 0);
    const auto b = epoch_order(50, true, 1, 0);
    const auto c = epoch_order(50, true, 1, 1);
    const auto d = epoch_order(50, true, 2, 0);
    CHECK(a == b);
    CHECK(a != c);
    CHECK(c == d);  // seed + epoch
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> all(50);
    std::iota(all.begin(), all.end(), 0);
    CHECK(sorted == all);
  }

  TEST_CASE("stream follows the given order") {
    const auto corpus = make_corpus({"a", "b", "c"});
    const auto v = Vocab::train(corpus.sentences, 6);
    BatchStream stream(corpus, v, {2, 0, 1});
    CHECK(stream.next()->sentence_idx == 2);
    CHECK(stream.next()->sentence_idx == 0);
    CHECK(stream.next()->sentence_idx == 1);
    CHECK_FALSE(stream.next().has_value());
  }
}
