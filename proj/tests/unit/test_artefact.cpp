#include <doctest.h>

#include <cmath>

#include "fuselm/artefact.hpp"
#include "fuselm/error.hpp"

using namespace fuselm;

namespace {

bool same_range(const CropRange& a, const CropRange& b) {
  return (a.empty() && b.empty()) || (a.first == b.first && a.last == b.last);
}

}  // namespace

TEST_SUITE("artefact") {
  TEST_CASE("crop range examples") {
    const auto r50 = crop_range(12, 10, CropSpec::right(0.5));
    CHECK(r50.first == 1);
    CHECK(r50.last == 6);
    const auto l75 = crop_range(12, 10, CropSpec::left(0.75));
    CHECK(l75.first == 9);
    CHECK(l75.last == 9);
    CHECK(crop_range(12, 10, CropSpec::right(0.0)).empty());
    CHECK(crop_range(12, 10, CropSpec::left(1.0)).empty());
    const auto none = crop_range(12, 10, CropSpec::none());
    CHECK(none.first == 1);
    CHECK(none.last == 9);
    CHECK(crop_range(12, 1, CropSpec::none()).empty());
  }

  TEST_CASE("rounding is to nearest with ties up") {
    // 25% of 2 = 0.5 -> 1; 25% of 6 = 1.5 -> 2; 10% of 4 = 0.4 -> 0.
    CHECK(crop_range(2, 3, CropSpec::right(0.25)).last == 1);
    CHECK(crop_range(6, 7, CropSpec::right(0.25)).last == 2);
    CHECK(crop_range(4, 5, CropSpec::right(0.10)).empty());
    CHECK(crop_range(6, 7, CropSpec::left(0.25)).first == 2);
  }

  TEST_CASE("positions outside 1..n+1 are input errors") {
    CHECK_THROWS_AS(crop_range(5, 0, CropSpec::none()), InputError);
    CHECK_THROWS_AS(crop_range(5, 7, CropSpec::none()), InputError);
    CHECK_NOTHROW(crop_range(5, 6, CropSpec::none()));
  }

  TEST_CASE("right 100% equals no crop; left 100% and right 0% are always empty") {
    for (std::size_t n = 0; n <= 20; ++n) {
      for (std::size_t t = 1; t <= n + 1; ++t) {
        CHECK(same_range(crop_range(n, t, CropSpec::right(1.0)), crop_range(n, t, CropSpec::none())));
        CHECK(same_range(crop_range(n, t, CropSpec::left(0.0)), crop_range(n, t, CropSpec::none())));
        CHECK(crop_range(n, t, CropSpec::right(0.0)).empty());
        CHECK(crop_range(n, t, CropSpec::left(1.0)).empty());
      }
    }
  }

  TEST_CASE("crop monotonicity in the percentage") {
    for (std::size_t n = 1; n <= 16; ++n) {
      for (std::size_t t = 1; t <= n + 1; ++t) {
        std::size_t prev_right = 0;
        std::size_t prev_left = n + 1;
        for (int milli = 0; milli <= 1000; milli += 50) {
          const auto r = crop_range(n, t, CropSpec{CropSide::Right, static_cast<std::uint16_t>(milli)});
          const auto l = crop_range(n, t, CropSpec{CropSide::Left, static_cast<std::uint16_t>(milli)});
          CHECK(r.size() >= prev_right);
          CHECK(l.size() <= prev_left);
          // Never beyond the prefix.
          if (!r.empty()) CHECK(r.last <= t - 1);
          if (!l.empty()) CHECK(l.last <= t - 1);
          prev_right = r.size();
          prev_left = l.size();
        }
      }
    }
  }

  TEST_CASE("crop spec parsing") {
    CHECK(CropSpec::parse("none") == CropSpec::none());
    CHECK(CropSpec::parse("right:50") == CropSpec::right(0.5));
    CHECK(CropSpec::parse("left:25").pct_milli == 250);
    CHECK(CropSpec::parse("right:12.5").pct_milli == 125);
    CHECK(CropSpec::right(0.5).str() == "right:50");
    CHECK_THROWS_AS(CropSpec::parse("right"), ConfigError);
    CHECK_THROWS_AS(CropSpec::parse("up:10"), ConfigError);
    CHECK_THROWS_AS(CropSpec::parse("right:150"), ConfigError);
    CHECK_THROWS_AS(CropSpec::parse("right:5x"), ConfigError);
  }

  TEST_CASE("zero artefact") {
    const auto a = zero_artefact(768);
    CHECK(a.dim() == 768);
    CHECK(a.is_zero());
    CHECK(a.kind == ArtefactKind::Zero);
    CHECK(zero_artefact(1).values == std::vector<double>{0.0});
    CHECK_THROWS_AS(zero_artefact(0), ConfigError);
  }

  TEST_CASE("bag of words") {
    const std::vector<std::string> train{"ab"};
    const auto v = Vocab::train(train, 5);
    const auto a = *v.find("a");
    const auto b = *v.find("b");
    const auto bow = bow_artefact(v, std::vector<TokenId>{a, a, b});
    CHECK(bow.values[a] == doctest::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-15));
    CHECK(bow.values[b] == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-15));
    CHECK(bow.dim() == v.size());
    CHECK(bow_artefact(v, std::vector<TokenId>{}).is_zero());
    CHECK(bow_artefact(v, std::vector<TokenId>{a}).values == bow_artefact(v, std::vector<TokenId>{a, a}).values);
    // BOS/EOS are not counted, order does not matter.
    CHECK(bow_artefact(v, std::vector<TokenId>{Vocab::kBos, b, a, a, Vocab::kEos}).values == bow.values);
    CHECK_THROWS_AS(bow_artefact(v, std::vector<TokenId>{99}), InputError);
  }

  TEST_CASE("tf-idf fit and artefact") {
    const auto corpus = make_corpus({"a b", "a c"});
    const auto v = Vocab::train(corpus.sentences, 3 + 4);  // a, b, c, space; no merges
    REQUIRE(v.merges().empty());
    const auto idf = fit_idf(corpus, v);
    const auto a = *v.find("a");
    const auto b = *v.find("b");
    const auto c = *v.find("c");
    CHECK(idf.num_documents == 2);
    CHECK(idf.idf[a] == doctest::Approx(1.0));
    CHECK(idf.idf[b] == doctest::Approx(std::log(1.5) + 1.0));
    CHECK(idf.idf[c] == doctest::Approx(1.405).epsilon(1e-3));
    // Unseen tokens get the largest weight.
    CHECK(idf.idf[Vocab::kUnk] == doctest::Approx(std::log(3.0) + 1.0));
    for (const double w : idf.idf) CHECK(w >= 0.0);

    const auto t = tfidf_artefact(idf, std::vector<TokenId>{a, b});
    CHECK(t.values[a] == doctest::Approx(0.580).epsilon(1e-3));
    CHECK(t.values[b] == doctest::Approx(0.815).epsilon(1e-3));
    CHECK(tfidf_artefact(idf, std::vector<TokenId>{}).is_zero());
  }

  TEST_CASE("count artefacts have unit norm") {
    const auto corpus = make_corpus({"the cat sat", "the dog ran"});
    const auto v = Vocab::train(corpus.sentences, 25);
    const auto ids = v.encode("the cat ran");
    const auto idf = fit_idf(corpus, v);
    for (const auto& a : {bow_artefact(v, ids), tfidf_artefact(idf, ids)}) {
      double n = 0.0;
      for (double x : a.values) n += x * x;
      CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("dropout") {
    const Artefact a{{1.0, 2.0}, ArtefactKind::Bow};
    std::mt19937_64 rng(1);
    CHECK(apply_dropout(a, 0.0, rng).values == a.values);
    CHECK(apply_dropout(a, 1.0, rng).is_zero());
    CHECK_THROWS_AS(apply_dropout(a, 1.5, rng), ConfigError);

    std::size_t dropped = 0;
    for (std::size_t i = 0; i < 10000; ++i) dropped += drop_artefact(0.5, 42, 0, i);
    CHECK(std::abs(dropped / 10000.0 - 0.5) <= 0.02);
    for (std::size_t i = 0; i < 100; ++i) {
      CHECK_FALSE(drop_artefact(0.0, 1, 2, i));
      CHECK(drop_artefact(1.0, 1, 2, i));
      CHECK(drop_artefact(0.3, 7, 4, i) == drop_artefact(0.3, 7, 4, i));
    }
  }
}
