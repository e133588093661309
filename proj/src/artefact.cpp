#include "fuselm/artefact.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "fuselm/error.hpp"
#include "fuselm/rng.hpp"

namespace fuselm {
namespace {

std::uint16_t pct_to_milli(double pct) {
  if (!(pct >= 0.0 && pct <= 1.0)) throw ConfigError("crop fraction must lie in [0, 1]");
  return static_cast<std::uint16_t>(std::lround(pct * 1000.0));
}

void normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) return;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
}

bool countable(TokenId id) { return id != Vocab::kBos && id != Vocab::kEos; }

}  // namespace

const char* to_string(ArtefactKind kind) {
  switch (kind) {
    case ArtefactKind::Zero: return "zero";
    case ArtefactKind::Bow: return "bow";
    case ArtefactKind::Tfidf: return "tfidf";
    case ArtefactKind::DensePrefix: return "dense-prefix";
    case ArtefactKind::DenseFull: return "dense-full";
    case ArtefactKind::DenseFullMasked: return "dense-full-masked";
  }
  return "zero";
}

bool Artefact::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double x) { return x == 0.0; });
}

const char* to_string(CropSide side) {
  switch (side) {
    case CropSide::None: return "none";
    case CropSide::Right: return "right";
    case CropSide::Left: return "left";
  }
  return "none";
}

CropSpec CropSpec::right(double pct) { return {CropSide::Right, pct_to_milli(pct)}; }

CropSpec CropSpec::left(double pct) { return {CropSide::Left, pct_to_milli(pct)}; }

CropSpec CropSpec::parse(std::string_view text) {
  if (text.empty() || text == "none") return none();
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ConfigError("crop spec must be none|right:<pct>|left:<pct>");
  const auto side = text.substr(0, colon);
  double pct = 0.0;
  try {
    std::size_t used = 0;
    const std::string num(text.substr(colon + 1));
    pct = std::stod(num, &used) / 100.0;
    if (used != num.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("bad crop percentage in '" + std::string(text) + "'");
  }
  if (side == "right") return right(pct);
  if (side == "left") return left(pct);
  throw ConfigError("unknown crop side '" + std::string(side) + "'");
}

std::string CropSpec::str() const {
  if (side == CropSide::None) return "none";
  std::ostringstream os;
  os << to_string(side) << ':' << pct_milli / 10.0;
  return os.str();
}

CropRange crop_range(std::size_t sentence_len, std::size_t predict_pos, const CropSpec& spec) {
  if (predict_pos < 1 || predict_pos > sentence_len + 1) {
    throw InputError("crop_range: position " + std::to_string(predict_pos) +
                     " outside 1.." + std::to_string(sentence_len + 1));
  }
  if (spec.pct_milli > 1000) throw ConfigError("crop fraction above 100%");
  const std::size_t prefix_end = predict_pos - 1;
  // round(pct * n), ties up, in exact integer arithmetic.
  const std::size_t cut = (2 * std::size_t{spec.pct_milli} * sentence_len + 1000) / 2000;
  switch (spec.side) {
    case CropSide::None: return {1, prefix_end};
    case CropSide::Right: return {1, std::min(prefix_end, cut)};
    case CropSide::Left:
      // Left 100% hides everything, including the last position before EOS.
      if (spec.pct_milli == 1000) return {1, 0};
      return {std::max<std::size_t>(1, cut), prefix_end};
  }
  return {1, prefix_end};
}

Artefact zero_artefact(std::size_t dim) {
  if (dim == 0) throw ConfigError("artefact dimension must be positive");
  return {std::vector<double>(dim, 0.0), ArtefactKind::Zero};
}

Artefact bow_artefact(const Vocab& vocab, std::span<const TokenId> prefix_ids) {
  Artefact a{std::vector<double>(vocab.size(), 0.0), ArtefactKind::Bow};
  for (const auto id : prefix_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
      throw InputError("bow_artefact: token id " + std::to_string(id) + " out of range");
    }
    if (countable(id)) a.values[id] += 1.0;
  }
  normalize(a.values);
  return a;
}

IdfTable fit_idf(const Corpus& corpus, const Vocab& vocab) {
  std::vector<std::size_t> df(vocab.size(), 0);
  for (const auto& sentence : corpus.sentences) {
    const auto ids = vocab.encode(sentence);
    std::unordered_set<TokenId> seen(ids.begin(), ids.end());
    for (const auto id : seen) ++df[id];
  }
  IdfTable table;
  table.num_documents = corpus.size();
  table.idf.resize(vocab.size());
  const double n = static_cast<double>(corpus.size());
  for (std::size_t i = 0; i < df.size(); ++i) {
    table.idf[i] = std::log((1.0 + n) / (1.0 + static_cast<double>(df[i]))) + 1.0;
  }
  return table;
}

Artefact tfidf_artefact(const IdfTable& idf, std::span<const TokenId> prefix_ids) {
  Artefact a{std::vector<double>(idf.idf.size(), 0.0), ArtefactKind::Tfidf};
  for (const auto id : prefix_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= idf.idf.size()) {
      throw InputError("tfidf_artefact: token id " + std::to_string(id) + " out of range");
    }
    if (countable(id)) a.values[id] += 1.0;
  }
  for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] *= idf.idf[i];
  normalize(a.values);
  return a;
}

Artefact apply_dropout(const Artefact& a, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("dropout probability must lie in [0, 1]");
  if (unit_double(rng) < p) return zero_artefact(a.dim());
  return a;
}

bool drop_artefact(double p, std::uint64_t seed, std::size_t epoch, std::size_t sentence_idx) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("dropout probability must lie in [0, 1]");
  return unit_double(mix64(seed, epoch, sentence_idx)) < p;
}

}  // namespace fuselm
