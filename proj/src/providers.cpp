#include "fuselm/providers.hpp"

#include "fuselm/error.hpp"

namespace fuselm {
namespace {

bool is_identity(const CropSpec& c) {
  return c.side == CropSide::None || (c.side == CropSide::Right && c.pct_milli == 1000) ||
         (c.side == CropSide::Left && c.pct_milli == 0);
}

std::span<const TokenId> visible(std::span<const TokenId> body, const CropRange& r) {
  return body.subspan(r.first - 1, r.size());
}

}  // namespace

std::vector<Artefact> ArtefactProvider::sentence_artefacts(std::size_t sentence_idx,
                                                           std::span<const TokenId> body,
                                                           const CropSpec& crop) const {
  std::vector<Artefact> out;
  out.reserve(body.size() + 1);
  for (std::size_t t = 1; t <= body.size() + 1; ++t) out.push_back(artefact_for(sentence_idx, body, t, crop));
  return out;
}

ZeroProvider::ZeroProvider(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ConfigError("zero provider needs a positive dimension");
}

Artefact ZeroProvider::artefact_for(std::size_t, std::span<const TokenId> body, std::size_t t,
                                    const CropSpec& crop) const {
  crop_range(body.size(), t, crop);  // bounds check only
  return zero_artefact(dim_);
}

Artefact BowProvider::artefact_for(std::size_t, std::span<const TokenId> body, std::size_t t,
                                   const CropSpec& crop) const {
  const auto range = crop_range(body.size(), t, crop);
  if (range.empty()) return zero_artefact(dim());
  return bow_artefact(*vocab_, visible(body, range));
}

Artefact TfidfProvider::artefact_for(std::size_t, std::span<const TokenId> body, std::size_t t,
                                     const CropSpec& crop) const {
  const auto range = crop_range(body.size(), t, crop);
  if (range.empty()) return zero_artefact(dim());
  return tfidf_artefact(idf_, visible(body, range));
}

std::size_t words_started(const Vocab& vocab, std::span<const TokenId> body, std::size_t count) {
  std::size_t words = 0;
  for (std::size_t j = 0; j < count && j < body.size(); ++j) {
    if (j == 0 || vocab.starts_word(body[j])) ++words;
  }
  return words;
}

std::size_t completed_words(const Vocab& vocab, std::span<const TokenId> body, std::size_t t) {
  const auto started = words_started(vocab, body, t - 1);
  return started > 0 ? started - 1 : 0;
}

bool store_serves_crop(const CropSpec& stored, const CropSpec& requested) {
  if (is_identity(requested)) return is_identity(stored);
  if (requested.side == CropSide::Right) return is_identity(stored) || stored == requested;
  return stored == requested;
}

StoreProvider::StoreProvider(std::shared_ptr<const ArtefactStore> store, const Vocab& vocab)
    : store_(std::move(store)), vocab_(&vocab) {
  if (!store_) throw ConfigError("store provider needs a store");
}

Artefact StoreProvider::artefact_for(std::size_t sentence_idx, std::span<const TokenId> body,
                                     std::size_t t, const CropSpec& crop) const {
  crop_range(body.size(), t, crop);  // bounds check in subword units
  const auto& header = store_->header();
  if (!store_serves_crop(header.crop, crop)) {
    throw ConfigError("store " + store_->origin() + " was exported with crop " + header.crop.str() +
                      " and cannot serve crop " + crop.str());
  }
  const auto n_words = words_started(*vocab_, body, body.size());
  switch (header.kind) {
    case StoreKind::DenseFull:
      if (!is_identity(crop)) throw ConfigError("dense-full stores cannot be cropped");
      return store_->lookup(sentence_idx, 0);
    case StoreKind::DenseFullMasked: {
      if (!is_identity(crop)) throw ConfigError("dense-full-masked stores cannot be cropped");
      // Key is the 0-based word holding the predicted token; EOS uses n_words.
      const auto masked = t <= body.size() ? words_started(*vocab_, body, t) - 1 : n_words;
      return store_->lookup(sentence_idx, static_cast<std::uint32_t>(masked));
    }
    case StoreKind::DensePrefix: {
      const auto done = completed_words(*vocab_, body, t);
      if (is_identity(crop)) return store_->lookup(sentence_idx, static_cast<std::uint32_t>(done));
      const auto range = crop_range(n_words, done + 1, crop);
      if (range.empty()) return zero_artefact(dim());
      return store_->lookup(sentence_idx, static_cast<std::uint32_t>(range.last));
    }
  }
  throw ConfigError("unknown store kind");
}

std::unique_ptr<ArtefactProvider> make_provider(std::string_view spec, const Vocab& vocab,
                                                const ProviderOptions& options) {
  if (spec == "zero") return std::make_unique<ZeroProvider>(options.zero_dim);
  if (spec == "bow") return std::make_unique<BowProvider>(vocab);
  if (spec == "tfidf") {
    if (options.idf_corpus == nullptr) throw ConfigError("tfidf provider needs the training corpus for its idf fit");
    return std::make_unique<TfidfProvider>(fit_idf(*options.idf_corpus, vocab));
  }
  if (spec.starts_with("store:") && spec.size() > 6) {
    auto store = std::make_shared<const ArtefactStore>(ArtefactStore::open(std::string(spec.substr(6))));
    return std::make_unique<StoreProvider>(std::move(store), vocab);
  }
  throw ConfigError("provider must be zero | bow | tfidf | store:<path>, got '" + std::string(spec) + "'");
}

}  // namespace fuselm
