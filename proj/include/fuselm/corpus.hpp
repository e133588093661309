#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fuselm/bpe.hpp"

namespace fuselm {

enum class Split { Train, Dev, Eval };

// Sentence-per-line corpus. sentence_idx is the position in `sentences`,
// i.e. the line number after empty lines are dropped.
struct Corpus {
  std::string name = "custom";
  std::vector<std::string> sentences;
  Split split = Split::Train;

  std::size_t size() const { return sentences.size(); }
  bool empty() const { return sentences.empty(); }
};

// One parameter update worth of data: [BOS] + encode(sentence) + [EOS].
struct SentenceBatch {
  std::size_t sentence_idx = 0;
  std::vector<TokenId> ids;

  // Tokens strictly between BOS and EOS.
  std::span<const TokenId> body() const { return std::span(ids).subspan(1, ids.size() - 2); }
  std::size_t num_targets() const { return ids.size() - 1; }
};

// Reads UTF-8 text, one sentence per line. Lines that are empty (after
// stripping a trailing CR) or whitespace-only are dropped. `limit` keeps the
// first `limit` surviving lines.
Corpus load_corpus(const std::filesystem::path& path, std::optional<std::size_t> limit = {},
                   Split split = Split::Train);

// Same filtering over in-memory lines.
Corpus make_corpus(std::vector<std::string> lines, std::string name = "custom",
                   Split split = Split::Train);

SentenceBatch make_batch(const Vocab& vocab, std::size_t sentence_idx, const std::string& sentence);

// Sentence order for one epoch: the identity when `shuffle` is false, else a
// permutation seeded by seed + epoch.
std::vector<std::size_t> epoch_order(std::size_t num_sentences, bool shuffle, std::uint64_t seed,
                                     std::size_t epoch);

// Pull-style stream of batches in a fixed order.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, const Vocab& vocab, std::vector<std::size_t> order);
  BatchStream(const Corpus& corpus, const Vocab& vocab);

  std::optional<SentenceBatch> next();

 private:
  const Corpus* corpus_;
  const Vocab* vocab_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

// All batches of a corpus in file order.
std::vector<SentenceBatch> batches(const Corpus& corpus, const Vocab& vocab);

// Σ (|encode(s)| + 1): the number of prediction targets in one epoch.
std::size_t count_targets(const Corpus& corpus, const Vocab& vocab);

const char* to_string(Split split);

}  // namespace fuselm
