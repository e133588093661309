#include "fuselm/bpe.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <unordered_set>

#include "fuselm/error.hpp"
#include "fuselm/utf8.hpp"

namespace fuselm {
namespace {

constexpr std::string_view kHeader = "BPEVOCAB 1";
constexpr std::string_view kMergesSentinel = "MERGES";
const std::string kSpecialNames[] = {"<s>", "</s>", "<unk>"};

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\\': out += "\\\\"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (i + 1 == s.size()) throw FormatError("vocab: dangling escape in '" + std::string(s) + "'");
    switch (s[++i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '\\': out += '\\'; break;
      default: throw FormatError("vocab: unknown escape in '" + std::string(s) + "'");
    }
  }
  return out;
}

struct WordEntry {
  std::vector<TokenId> symbols;
  long long count = 0;
};

using Pair = std::pair<TokenId, TokenId>;

struct PairHash {
  std::size_t operator()(const Pair& p) const {
    return std::hash<std::uint64_t>()((std::uint64_t(std::uint32_t(p.first)) << 32) |
                                      std::uint32_t(p.second));
  }
};

std::vector<TokenId> apply_merge(const std::vector<TokenId>& symbols, const Pair& pair,
                                 TokenId result) {
  std::vector<TokenId> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size();) {
    if (i + 1 < symbols.size() && symbols[i] == pair.first && symbols[i + 1] == pair.second) {
      out.push_back(result);
      i += 2;
    } else {
      out.push_back(symbols[i]);
      ++i;
    }
  }
  return out;
}

}  // namespace

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ' ') {
      if (i > start) words.push_back(text.substr(start, i - start));
      start = i;
    }
  }
  return words;
}

Vocab Vocab::train(std::span<const std::string> corpus, std::size_t vocab_size) {
  if (corpus.empty()) throw InputError("train_bpe: corpus is empty");

  std::map<std::string, long long> word_counts;
  std::set<std::string> alphabet;
  for (const auto& sentence : corpus) {
    for (auto word : split_words(sentence)) {
      ++word_counts[std::string(word)];
    }
  }
  std::vector<std::pair<std::vector<std::string>, long long>> split;
  split.reserve(word_counts.size());
  for (const auto& [word, count] : word_counts) {
    auto cps = utf8::code_points(word);
    alphabet.insert(cps.begin(), cps.end());
    split.emplace_back(std::move(cps), count);
  }

  if (vocab_size < kNumSpecials + alphabet.size()) {
    throw ConfigError("train_bpe: vocab_size " + std::to_string(vocab_size) +
                      " cannot hold " + std::to_string(alphabet.size()) +
                      " base characters plus " + std::to_string(kNumSpecials) + " specials");
  }

  Vocab vocab;
  vocab.tokens_.assign(std::begin(kSpecialNames), std::end(kSpecialNames));
  vocab.tokens_.insert(vocab.tokens_.end(), alphabet.begin(), alphabet.end());
  vocab.alphabet_size_ = alphabet.size();
  vocab.rebuild_index();

  std::vector<WordEntry> words;
  words.reserve(split.size());
  for (auto& [cps, count] : split) {
    WordEntry entry;
    entry.count = count;
    for (const auto& cp : cps) entry.symbols.push_back(vocab.ids_.at(cp));
    words.push_back(std::move(entry));
  }

  std::unordered_map<Pair, long long, PairHash> pair_counts;
  std::unordered_map<Pair, std::vector<std::uint32_t>, PairHash> where;
  for (std::uint32_t w = 0; w < words.size(); ++w) {
    const auto& s = words[w].symbols;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      const Pair p{s[i], s[i + 1]};
      pair_counts[p] += words[w].count;
      where[p].push_back(w);
    }
  }

  const auto& tokens = vocab.tokens_;
  struct Candidate {
    long long count;
    Pair pair;
  };
  // Max-heap on count, then smallest (left, right) strings.
  auto worse = [&tokens](const Candidate& a, const Candidate& b) {
    if (a.count != b.count) return a.count < b.count;
    const auto& al = tokens[a.pair.first];
    const auto& bl = tokens[b.pair.first];
    if (al != bl) return al > bl;
    return tokens[a.pair.second] > tokens[b.pair.second];
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);
  for (const auto& [p, c] : pair_counts) heap.push({c, p});

  std::vector<std::uint32_t> stamp(words.size(), 0);
  std::uint32_t iteration = 0;
  while (vocab.tokens_.size() < vocab_size && !heap.empty()) {
    const auto best = heap.top();
    heap.pop();
    const auto it = pair_counts.find(best.pair);
    if (it == pair_counts.end() || it->second != best.count || best.count <= 0) continue;

    ++iteration;
    const auto& [left, right] = best.pair;
    std::string merged = vocab.tokens_[left] + vocab.tokens_[right];
    TokenId result;
    if (auto found = vocab.ids_.find(merged); found != vocab.ids_.end()) {
      result = found->second;
    } else {
      result = static_cast<TokenId>(vocab.tokens_.size());
      vocab.tokens_.push_back(merged);
      vocab.ids_.emplace(std::move(merged), result);
    }
    vocab.merges_.emplace_back(vocab.tokens_[left], vocab.tokens_[right]);

    std::unordered_set<Pair, PairHash> touched;
    const auto affected = std::move(where[best.pair]);
    where.erase(best.pair);
    for (const auto w : affected) {
      if (stamp[w] == iteration) continue;
      stamp[w] = iteration;
      auto& entry = words[w];
      auto& s = entry.symbols;
      bool present = false;
      for (std::size_t i = 0; i + 1 < s.size() && !present; ++i) {
        present = s[i] == left && s[i + 1] == right;
      }
      if (!present) continue;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const Pair p{s[i], s[i + 1]};
        pair_counts[p] -= entry.count;
        touched.insert(p);
      }
      s = apply_merge(s, best.pair, result);
      for (std::size_t i = 0; i + 1 < s.size(); ++i) {
        const Pair p{s[i], s[i + 1]};
        pair_counts[p] += entry.count;
        where[p].push_back(w);
        touched.insert(p);
      }
    }
    for (const auto& p : touched) {
      auto c = pair_counts.find(p);
      if (c == pair_counts.end()) continue;
      if (c->second <= 0) {
        pair_counts.erase(c);
      } else {
        heap.push({c->second, p});
      }
    }
  }

  vocab.rebuild_index();
  return vocab;
}

void Vocab::rebuild_index() {
  ids_.clear();
  ranks_.clear();
  for (std::size_t i = kNumSpecials; i < tokens_.size(); ++i) {
    ids_.emplace(tokens_[i], static_cast<TokenId>(i));
  }
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& [l, rt] = merges_[r];
    const TokenId li = ids_.at(l);
    const TokenId ri = ids_.at(rt);
    const TokenId res = ids_.at(l + rt);
    ranks_.try_emplace({li, ri}, MergeTarget{r, res});
  }
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("token id " + std::to_string(id) + " out of range for vocab of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  return std::nullopt;
}

bool Vocab::starts_word(TokenId id) const {
  if (id < static_cast<TokenId>(kNumSpecials)) return false;
  return !token(id).empty() && token(id).front() == ' ';
}

std::vector<TokenId> Vocab::encode_word(const std::vector<std::string>& symbols) const {
  std::vector<TokenId> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) {
    auto it = ids_.find(s);
    ids.push_back(it == ids_.end() ? kUnk : it->second);
  }
  while (ids.size() > 1) {
    std::size_t best_rank = merges_.size();
    std::pair<TokenId, TokenId> best{};
    TokenId result = kUnk;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
      auto it = ranks_.find({ids[i], ids[i + 1]});
      if (it != ranks_.end() && it->second.rank < best_rank) {
        best_rank = it->second.rank;
        best = it->first;
        result = it->second.result;
      }
    }
    if (best_rank == merges_.size()) break;
    ids = apply_merge(ids, best, result);
  }
  return ids;
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (auto word : split_words(text)) {
    const auto ids = encode_word(utf8::code_points(word));
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const auto id : ids) {
    const auto& t = token(id);
    if (id == kUnk) {
      out += kReplacement;
    } else if (id >= static_cast<TokenId>(kNumSpecials)) {
      out += t;
    }
  }
  return out;
}

std::string Vocab::serialize() const {
  std::ostringstream os;
  os << kHeader << '\n' << "size " << tokens_.size() << '\n';
  for (const auto& t : tokens_) os << escape(t) << '\n';
  os << kMergesSentinel << '\n';
  for (const auto& [l, r] : merges_) os << escape(l) << '\t' << escape(r) << '\n';
  return os.str();
}

Vocab Vocab::parse(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    const auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.size() < 2 || lines[0] != kHeader) throw FormatError("vocab: missing BPEVOCAB 1 header");
  if (!lines[1].starts_with("size ")) throw FormatError("vocab: missing size line");
  std::size_t size = 0;
  try {
    size = std::stoull(std::string(lines[1].substr(5)));
  } catch (const std::exception&) {
    throw FormatError("vocab: bad size line '" + std::string(lines[1]) + "'");
  }
  if (size < kNumSpecials || lines.size() < 3 + size) throw FormatError("vocab: truncated token table");
  if (lines[2 + size] != kMergesSentinel) throw FormatError("vocab: MERGES sentinel not found");

  Vocab vocab;
  for (std::size_t i = 0; i < size; ++i) vocab.tokens_.push_back(unescape(lines[2 + i]));
  for (std::size_t i = 3 + size; i < lines.size(); ++i) {
    const auto tab = lines[i].find('\t');
    if (tab == std::string_view::npos || lines[i].find('\t', tab + 1) != std::string_view::npos) {
      throw FormatError("vocab: malformed merge line " + std::to_string(i + 1));
    }
    vocab.merges_.emplace_back(unescape(lines[i].substr(0, tab)), unescape(lines[i].substr(tab + 1)));
  }

  std::size_t alphabet = 0;
  while (kNumSpecials + alphabet < size && utf8::valid(vocab.tokens_[kNumSpecials + alphabet]) &&
         utf8::code_points(vocab.tokens_[kNumSpecials + alphabet]).size() == 1) {
    ++alphabet;
  }
  vocab.alphabet_size_ = alphabet;

  std::unordered_set<std::string> known(vocab.tokens_.begin() + kNumSpecials,
                                        vocab.tokens_.begin() + kNumSpecials + alphabet);
  if (known.size() != alphabet) throw FormatError("vocab: duplicate base character");
  std::unordered_set<std::string> produced;
  for (const auto& [l, r] : vocab.merges_) {
    if (!known.contains(l) || !known.contains(r)) {
      throw FormatError("vocab: merge (" + l + ", " + r + ") uses an underived symbol");
    }
    known.insert(l + r);
    produced.insert(l + r);
  }
  std::unordered_set<std::string> seen;
  for (std::size_t i = kNumSpecials; i < size; ++i) {
    const auto& t = vocab.tokens_[i];
    if (!seen.insert(t).second) throw FormatError("vocab: duplicate token '" + t + "'");
    if (i >= kNumSpecials + alphabet && !produced.contains(t)) {
      throw FormatError("vocab: token '" + t + "' is neither a base character nor a merge result");
    }
  }
  vocab.rebuild_index();
  return vocab;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocab " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocab " + path.string());
  out << serialize();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace fuselm
