#include "fuselm/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <json.hpp>
#include <map>
#include <sstream>
#include <thread>

#include "fuselm/binary_io.hpp"
#include "fuselm/error.hpp"

namespace fuselm {
namespace {

std::string mode_name(const ModelConfig& c) {
  return c.type == ModelType::Ffn ? "ffn" : to_string(c.mode);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["corpus"] = corpus;
  j["mode"] = mode;
  j["provider"] = provider;
  j["crop"] = crop.str();
  j["ppl"] = ppl;
  j["nll"] = mean_nll();
  j["token_count"] = tokens;
  j["token_nll"] = token_nll;
  return j.dump(2);
}

EvalReport perplexity(const Model& model, const Corpus& corpus, const Vocab& vocab,
                      const ArtefactProvider& provider, const EvalOptions& options) {
  const auto n = corpus.size();
  std::vector<LossSummary> per_sentence(n);
  const auto score = [&](std::size_t i) {
    const auto batch = make_batch(vocab, i, corpus.sentences[i]);
    const auto artefacts = model.artefacts_for(provider, i, batch.body(), options.crop);
    per_sentence[i] = model.loss(batch.ids, artefacts);
  };

  const auto threads = std::clamp<std::size_t>(options.threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) score(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += threads) score(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  EvalReport report;
  report.corpus = corpus.name;
  report.mode = mode_name(model.config());
  report.provider = provider.describe();
  report.crop = options.crop;
  for (const auto& s : per_sentence) {
    report.nll_sum += s.nll;
    report.tokens += s.tokens;
    if (options.keep_token_nll) report.token_nll.insert(report.token_nll.end(), s.token_nll.begin(), s.token_nll.end());
  }
  if (report.tokens == 0) throw InputError("cannot evaluate an empty corpus");
  report.ppl = std::exp(report.mean_nll());
  return report;
}

std::vector<WordSurprisal> word_surprisals(const Model& model, const Vocab& vocab,
                                           const ArtefactProvider& provider, const Corpus& text,
                                           const CropSpec& crop) {
  std::vector<WordSurprisal> out;
  for (std::size_t s = 0; s < text.size(); ++s) {
    const auto& sentence = text.sentences[s];
    // Encoding is per word, so per-word encodings concatenate to the sentence.
    std::vector<std::pair<std::string, std::size_t>> words;  // (text, subword count)
    std::size_t pending_space_tokens = 0;
    for (const auto w : split_words(sentence)) {
      const auto n = vocab.encode(w).size();
      auto clean = trim(w);
      if (clean.empty()) {
        pending_space_tokens += n;
        continue;
      }
      words.emplace_back(std::move(clean), n + pending_space_tokens);
      pending_space_tokens = 0;
    }
    const auto batch = make_batch(vocab, s, sentence);
    const auto artefacts = model.artefacts_for(provider, s, batch.body(), crop);
    const auto loss = model.loss(batch.ids, artefacts);
    std::size_t pos = 0;
    for (auto& [word, n] : words) {
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) sum += loss.token_nll[pos + k];
      pos += n;
      out.push_back({s, std::move(word), sum, n});
    }
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DataError("pearson: sample sizes differ (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  }
  if (x.size() < 2) throw DataError("pearson: need at least two samples");
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y)) throw DataError("pearson: correlation undefined for zero variance");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson: correlation undefined for zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<ReadingTimeRecord> parse_reading_times(std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw DataError(origin + ": empty reading-time file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "word\tmean_rt_ms") throw DataError(origin + ": header must be 'word<TAB>mean_rt_ms'");
  std::vector<ReadingTimeRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected two tab-separated fields");
    }
    ReadingTimeRecord r;
    r.word = line.substr(0, tab);
    try {
      std::size_t used = 0;
      const auto field = line.substr(tab + 1);
      r.mean_rt = std::stod(field, &used);
      if (used != field.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": bad reading time");
    }
    if (!(r.mean_rt > 0.0) || !std::isfinite(r.mean_rt)) {
      throw DataError(origin + ":" + std::to_string(lineno) + ": reading time must be positive");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ReadingTimeRecord> read_reading_times(const std::filesystem::path& path) {
  return parse_reading_times(binary::read_file(path), path.string());
}

std::string normalize_word(std::string_view word) {
  std::string s = trim(word);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back()))) s.pop_back();
  return s;
}

std::string Correlation::to_json() const {
  nlohmann::ordered_json j;
  j["pearson_r"] = r;
  auto pairs_json = nlohmann::json::array();
  for (const auto& p : pairs) pairs_json.push_back({{"word", p.word}, {"surprisal", p.surprisal}, {"mean_rt_ms", p.mean_rt}});
  j["pairs"] = std::move(pairs_json);
  return j.dump(2);
}

Correlation correlate(const std::vector<WordSurprisal>& surprisals,
                      const std::vector<ReadingTimeRecord>& reading_times) {
  const auto common = std::min(surprisals.size(), reading_times.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (normalize_word(surprisals[i].word) != normalize_word(reading_times[i].word)) {
      throw DataError("reading times diverge from the text at word " + std::to_string(i) + ": text '" +
                      surprisals[i].word + "' vs reading-time file '" + reading_times[i].word + "'");
    }
  }
  if (surprisals.size() != reading_times.size()) {
    throw DataError("text has " + std::to_string(surprisals.size()) + " words but the reading-time file has " +
                    std::to_string(reading_times.size()) + "; first unmatched word at index " + std::to_string(common));
  }
  Correlation c;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < common; ++i) {
    c.pairs.push_back({surprisals[i].word, surprisals[i].surprisal, reading_times[i].mean_rt});
    x.push_back(surprisals[i].surprisal);
    y.push_back(reading_times[i].mean_rt);
  }
  c.r = pearson(x, y);
  return c;
}

Correlation correlate_reading_times(const Model& model, const Vocab& vocab, const ArtefactProvider& provider,
                                    const Corpus& story, const std::vector<ReadingTimeRecord>& reading_times,
                                    const CropSpec& crop) {
  return correlate(word_surprisals(model, vocab, provider, story, crop), reading_times);
}

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

std::string SimilarityProfile::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "prefix_len,consecutive,to_last,count\n";
  for (const auto& r : rows) os << r.prefix_len << ',' << r.consecutive << ',' << r.to_last << ',' << r.count << '\n';
  return os.str();
}

SimilarityProfile similarity_profile(const ArtefactStore& store, std::size_t min_count) {
  if (store.header().kind != StoreKind::DensePrefix) throw ConfigError("similarity profile needs a dense-prefix store");
  const auto& keys = store.keys();
  const auto vec = [&](std::size_t record) {
    const auto v = store.values_at(record);
    return std::vector<double>(v.begin(), v.end());
  };
  struct Acc {
    double consecutive = 0.0, to_last = 0.0;
    std::size_t count = 0;
  };
  std::map<std::size_t, Acc> acc;
  std::size_t begin = 0;
  while (begin < keys.size()) {
    std::size_t end = begin;
    while (end < keys.size() && keys[end].sentence_idx == keys[begin].sentence_idx) ++end;
    for (std::size_t k = begin; k < end; ++k) {
      if (keys[k].prefix_len != k - begin) {
        throw LookupError("store " + store.origin() + ": sentence " + std::to_string(keys[begin].sentence_idx) +
                          " is missing prefix length " + std::to_string(k - begin));
      }
    }
    const auto last = vec(end - 1);
    auto prev = vec(begin);
    for (std::size_t k = begin + 1; k < end; ++k) {
      auto cur = vec(k);
      auto& a = acc[k - begin];
      a.consecutive += cosine(prev, cur);
      a.to_last += cosine(prev, last);
      ++a.count;
      prev = std::move(cur);
    }
    begin = end;
  }
  SimilarityProfile profile;
  for (const auto& [i, a] : acc) {
    if (a.count < min_count) continue;
    const double n = static_cast<double>(a.count);
    profile.rows.push_back({i, a.consecutive / n, a.to_last / n, a.count});
  }
  return profile;
}

}  // namespace fuselm
