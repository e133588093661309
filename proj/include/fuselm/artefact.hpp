#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fuselm/bpe.hpp"
#include "fuselm/corpus.hpp"

namespace fuselm {

enum class ArtefactKind : std::uint8_t { Zero, Bow, Tfidf, DensePrefix, DenseFull, DenseFullMasked };

const char* to_string(ArtefactKind kind);

// The conditioning vector for one prediction position.
struct Artefact {
  std::vector<double> values;
  ArtefactKind kind = ArtefactKind::Zero;

  std::size_t dim() const { return values.size(); }
  bool is_zero() const;
};

enum class CropSide : std::uint8_t { None = 0, Right = 1, Left = 2 };

const char* to_string(CropSide side);

// Fraction of the sentence (in thousandths) that remains visible to the
// artefact. Right keeps a prefix of the sentence, left keeps a suffix of it;
// in both cases nothing at or after the predicted position is visible.
struct CropSpec {
  CropSide side = CropSide::None;
  std::uint16_t pct_milli = 0;

  static CropSpec none() { return {}; }
  static CropSpec right(double pct);
  static CropSpec left(double pct);
  // "none", "right:50", "left:12.5" (percent).
  static CropSpec parse(std::string_view text);

  double pct() const { return pct_milli / 1000.0; }
  std::string str() const;
  bool operator==(const CropSpec&) const = default;
};

// Inclusive 1-indexed span of sentence positions; empty when last < first.
struct CropRange {
  std::size_t first = 1;
  std::size_t last = 0;

  bool empty() const { return last < first; }
  std::size_t size() const { return empty() ? 0 : last - first + 1; }
  bool operator==(const CropRange&) const = default;
};

// Visible span for predicting position t (1 <= t <= n+1) of an n-position
// sentence. The cut point is round(pct * n) with ties rounded up.
CropRange crop_range(std::size_t sentence_len, std::size_t predict_pos, const CropSpec& spec);

Artefact zero_artefact(std::size_t dim);

// L2-normalised token counts over `prefix_ids`; BOS and EOS are not counted.
Artefact bow_artefact(const Vocab& vocab, std::span<const TokenId> prefix_ids);

// Smoothed inverse document frequencies fitted on a training corpus, one
// sentence per document: idf = ln((1 + N) / (1 + df)) + 1.
struct IdfTable {
  std::vector<double> idf;
  std::size_t num_documents = 0;
};

IdfTable fit_idf(const Corpus& corpus, const Vocab& vocab);

Artefact tfidf_artefact(const IdfTable& idf, std::span<const TokenId> prefix_ids);

// One Bernoulli(p) draw: the zero vector with probability p, else `a`.
Artefact apply_dropout(const Artefact& a, double p, std::mt19937_64& rng);

// Deterministic per-sentence dropout decision keyed by (seed, epoch, sentence).
bool drop_artefact(double p, std::uint64_t seed, std::size_t epoch, std::size_t sentence_idx);

}  // namespace fuselm
