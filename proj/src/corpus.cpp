#include "fuselm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "fuselm/error.hpp"
#include "fuselm/rng.hpp"
#include "fuselm/utf8.hpp"

namespace fuselm {
namespace {

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; });
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, std::optional<std::size_t> limit,
                   Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  Corpus corpus;
  corpus.name = path.stem().string();
  corpus.split = split;
  std::string line;
  std::size_t line_no = 0;
  while ((!limit || corpus.sentences.size() < *limit) && std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!utf8::valid(line)) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": invalid UTF-8");
    }
    if (blank(line)) continue;
    corpus.sentences.push_back(std::move(line));
  }
  if (in.bad()) throw IoError("read failed for " + path.string());
  return corpus;
}

Corpus make_corpus(std::vector<std::string> lines, std::string name, Split split) {
  Corpus corpus;
  corpus.name = std::move(name);
  corpus.split = split;
  for (auto& line : lines) {
    if (line.find('\n') != std::string::npos) throw InputError("sentence contains a newline");
    if (!blank(line)) corpus.sentences.push_back(std::move(line));
  }
  return corpus;
}

SentenceBatch make_batch(const Vocab& vocab, std::size_t sentence_idx, const std::string& sentence) {
  SentenceBatch batch;
  batch.sentence_idx = sentence_idx;
  batch.ids.push_back(Vocab::kBos);
  const auto body = vocab.encode(sentence);
  batch.ids.insert(batch.ids.end(), body.begin(), body.end());
  batch.ids.push_back(Vocab::kEos);
  return batch;
}

std::vector<std::size_t> epoch_order(std::size_t num_sentences, bool shuffle, std::uint64_t seed,
                                     std::size_t epoch) {
  if (shuffle) return permutation(num_sentences, seed + epoch);
  std::vector<std::size_t> order(num_sentences);
  std::iota(order.begin(), order.end(), std::size_t{0});
  return order;
}

BatchStream::BatchStream(const Corpus& corpus, const Vocab& vocab, std::vector<std::size_t> order)
    : corpus_(&corpus), vocab_(&vocab), order_(std::move(order)) {
  for (auto i : order_) {
    if (i >= corpus.size()) throw InputError("batch order references sentence " + std::to_string(i));
  }
}

BatchStream::BatchStream(const Corpus& corpus, const Vocab& vocab)
    : BatchStream(corpus, vocab, epoch_order(corpus.size(), false, 0, 0)) {}

std::optional<SentenceBatch> BatchStream::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  const auto idx = order_[pos_++];
  return make_batch(*vocab_, idx, corpus_->sentences[idx]);
}

std::vector<SentenceBatch> batches(const Corpus& corpus, const Vocab& vocab) {
  std::vector<SentenceBatch> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) out.push_back(make_batch(vocab, i, corpus.sentences[i]));
  return out;
}

std::size_t count_targets(const Corpus& corpus, const Vocab& vocab) {
  std::size_t total = 0;
  for (const auto& s : corpus.sentences) total += vocab.encode(s).size() + 1;
  return total;
}

const char* to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Eval: return "eval";
  }
  return "train";
}

}  // namespace fuselm
