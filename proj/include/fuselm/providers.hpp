#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fuselm/artefact.hpp"
#include "fuselm/bpe.hpp"
#include "fuselm/corpus.hpp"
#include "fuselm/store.hpp"

namespace fuselm {

// Source of artefacts for prediction positions.
//
// `body` is the sentence's subword ids without BOS/EOS and `t` is the
// 1-indexed position being predicted (t = body.size() + 1 predicts EOS).
// Only body[0 .. t-2] may influence the result, plus the sentence length
// when cropping. Implementations are immutable and safe to share.
class ArtefactProvider {
 public:
  virtual ~ArtefactProvider() = default;

  virtual std::size_t dim() const = 0;
  virtual ArtefactKind kind() const = 0;
  virtual std::string describe() const = 0;

  virtual Artefact artefact_for(std::size_t sentence_idx, std::span<const TokenId> body,
                                std::size_t t, const CropSpec& crop) const = 0;

  // Artefacts for every target of a sentence (t = 1 .. n+1).
  std::vector<Artefact> sentence_artefacts(std::size_t sentence_idx, std::span<const TokenId> body,
                                           const CropSpec& crop) const;
};

class ZeroProvider final : public ArtefactProvider {
 public:
  explicit ZeroProvider(std::size_t dim);
  std::size_t dim() const override { return dim_; }
  ArtefactKind kind() const override { return ArtefactKind::Zero; }
  std::string describe() const override { return "zero"; }
  Artefact artefact_for(std::size_t, std::span<const TokenId> body, std::size_t t,
                        const CropSpec& crop) const override;

 private:
  std::size_t dim_;
};

// Counts over the cropped subword prefix.
class BowProvider final : public ArtefactProvider {
 public:
  explicit BowProvider(const Vocab& vocab) : vocab_(&vocab) {}
  std::size_t dim() const override { return vocab_->size(); }
  ArtefactKind kind() const override { return ArtefactKind::Bow; }
  std::string describe() const override { return "bow"; }
  Artefact artefact_for(std::size_t, std::span<const TokenId> body, std::size_t t,
                        const CropSpec& crop) const override;

 private:
  const Vocab* vocab_;
};

class TfidfProvider final : public ArtefactProvider {
 public:
  explicit TfidfProvider(IdfTable idf) : idf_(std::move(idf)) {}
  std::size_t dim() const override { return idf_.idf.size(); }
  ArtefactKind kind() const override { return ArtefactKind::Tfidf; }
  std::string describe() const override { return "tfidf"; }
  Artefact artefact_for(std::size_t, std::span<const TokenId> body, std::size_t t,
                        const CropSpec& crop) const override;
  const IdfTable& idf() const { return idf_; }

 private:
  IdfTable idf_;
};

// Serves precomputed dense artefacts keyed by whitespace-word prefix length.
//
// A subword position maps to the number of words known to be complete: a
// word counts once the next word has started inside the prefix, so the
// artefact never reveals whether the predicted token opens a new word.
// Cropping is applied in word units; the store's own crop header must be
// able to serve the requested crop (an uncropped store serves any right crop
// because a right-cropped span is itself a prefix).
class StoreProvider final : public ArtefactProvider {
 public:
  StoreProvider(std::shared_ptr<const ArtefactStore> store, const Vocab& vocab);
  std::size_t dim() const override { return store_->dim(); }
  ArtefactKind kind() const override { return artefact_kind(store_->header().kind); }
  std::string describe() const override { return "store:" + store_->origin(); }
  Artefact artefact_for(std::size_t sentence_idx, std::span<const TokenId> body, std::size_t t,
                        const CropSpec& crop) const override;
  const ArtefactStore& store() const { return *store_; }

 private:
  std::shared_ptr<const ArtefactStore> store_;
  const Vocab* vocab_;
};

// Number of words begun within body[0 .. count-1].
std::size_t words_started(const Vocab& vocab, std::span<const TokenId> body, std::size_t count);

// Words of the prefix body[0 .. t-2] that are known to be complete.
std::size_t completed_words(const Vocab& vocab, std::span<const TokenId> body, std::size_t t);

// Whether a store with crop `stored` can answer requests made with `requested`.
bool store_serves_crop(const CropSpec& stored, const CropSpec& requested);

struct ProviderOptions {
  std::size_t zero_dim = 768;
  // Training corpus for the idf fit (tfidf only).
  const Corpus* idf_corpus = nullptr;
};

// Parses `zero | bow | tfidf | store:<path>`.
std::unique_ptr<ArtefactProvider> make_provider(std::string_view spec, const Vocab& vocab,
                                                const ProviderOptions& options = {});

}  // namespace fuselm
