#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fuselm/artefact.hpp"
#include "fuselm/corpus.hpp"
#include "fuselm/network.hpp"
#include "fuselm/providers.hpp"
#include "fuselm/store.hpp"

namespace fuselm {

struct EvalOptions {
  CropSpec crop;
  std::size_t threads = 1;
  bool keep_token_nll = true;
};

struct EvalReport {
  std::string corpus;
  std::string mode;
  std::string provider;
  CropSpec crop;
  double nll_sum = 0.0;
  std::size_t tokens = 0;
  double ppl = 0.0;
  std::vector<double> token_nll;  // file order, EOS targets included

  double mean_nll() const { return tokens == 0 ? 0.0 : nll_sum / static_cast<double>(tokens); }
  std::string to_json() const;
};

// Subword perplexity over every target of every sentence. Sentences are
// scored in parallel when threads > 1; the NLL sum is reduced in sentence
// order so the result does not depend on the thread count.
EvalReport perplexity(const Model& model, const Corpus& corpus, const Vocab& vocab,
                      const ArtefactProvider& provider, const EvalOptions& options = {});

struct WordSurprisal {
  std::size_t sentence_idx = 0;
  std::string word;  // leading spaces removed
  double surprisal = 0.0;
  std::size_t subwords = 0;
};

// Per-word surprisal: the summed NLL of each word's subwords, with context
// reset at every sentence start. Runs of extra spaces are folded into the
// word that follows them. EOS is not part of any word.
std::vector<WordSurprisal> word_surprisals(const Model& model, const Vocab& vocab,
                                           const ArtefactProvider& provider, const Corpus& text,
                                           const CropSpec& crop = {});

// Product-moment correlation in double precision. Throws DataError on
// length mismatch, fewer than two samples or zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct ReadingTimeRecord {
  std::string word;
  double mean_rt = 0.0;  // milliseconds
};

// TSV with header "word\tmean_rt_ms".
std::vector<ReadingTimeRecord> read_reading_times(const std::filesystem::path& path);
std::vector<ReadingTimeRecord> parse_reading_times(std::string_view text, const std::string& origin = "<memory>");

// Lowercase (ASCII) and strip trailing punctuation.
std::string normalize_word(std::string_view word);

struct ReadingTimePair {
  std::string word;
  double surprisal = 0.0;
  double mean_rt = 0.0;
};

struct Correlation {
  double r = 0.0;
  std::vector<ReadingTimePair> pairs;
  std::string to_json() const;
};

// Aligns surprisals with reading times word for word; any mismatch is fatal.
Correlation correlate(const std::vector<WordSurprisal>& surprisals,
                      const std::vector<ReadingTimeRecord>& reading_times);

Correlation correlate_reading_times(const Model& model, const Vocab& vocab, const ArtefactProvider& provider,
                                    const Corpus& story, const std::vector<ReadingTimeRecord>& reading_times,
                                    const CropSpec& crop = {});

struct SimilarityRow {
  std::size_t prefix_len = 0;
  double consecutive = 0.0;  // mean cos(e_{i-1}, e_i)
  double to_last = 0.0;      // mean cos(e_{i-1}, e_last)
  std::size_t count = 0;
};

struct SimilarityProfile {
  std::vector<SimilarityRow> rows;
  std::string to_csv() const;
};

double cosine(std::span<const double> a, std::span<const double> b);

// Needs a dense-prefix store with prefix lengths 0..n for every sentence.
SimilarityProfile similarity_profile(const ArtefactStore& store, std::size_t min_count = 10);

}  // namespace fuselm
