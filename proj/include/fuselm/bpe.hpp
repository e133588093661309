#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fuselm {

using TokenId = std::int32_t;

// Byte-pair-encoding vocabulary over UTF-8 code points.
//
// Text is pre-tokenized on the space character: every space starts a new
// word and stays attached to it as the word's first symbol, so " cat" is the
// word that follows "the" in "the cat". Merges never cross word boundaries,
// which makes decoding a plain concatenation of token strings.
//
// Token layout: ids 0..2 are BOS, EOS, UNK; then the base alphabet in byte
// order; then merge results in training order.
class Vocab {
 public:
  static constexpr TokenId kBos = 0;
  static constexpr TokenId kEos = 1;
  static constexpr TokenId kUnk = 2;
  static constexpr std::size_t kNumSpecials = 3;
  static constexpr std::size_t kDefaultSize = 8192;
  // Decoded form of UNK (U+FFFD).
  static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";

  using Merge = std::pair<std::string, std::string>;

  Vocab() = default;

  // Learns merges until the vocabulary holds `vocab_size` tokens or no
  // adjacent pair is left. Ties on frequency go to the lexicographically
  // smallest (left, right) pair, compared bytewise.
  static Vocab train(std::span<const std::string> corpus, std::size_t vocab_size);

  static Vocab parse(std::string_view text);
  static Vocab load(const std::filesystem::path& path);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  // No BOS/EOS is added. Code points never seen in training become UNK.
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t alphabet_size() const { return alphabet_size_; }
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<Merge>& merges() const { return merges_; }
  std::optional<TokenId> find(std::string_view token) const;

  // True for tokens that begin a new whitespace word (their text starts with
  // a space). The first token of a sentence also begins a word.
  bool starts_word(TokenId id) const;

  bool operator==(const Vocab& other) const {
    return tokens_ == other.tokens_ && merges_ == other.merges_;
  }

 private:
  struct PairHash {
    std::size_t operator()(const std::pair<TokenId, TokenId>& p) const {
      return std::hash<std::uint64_t>()((std::uint64_t(std::uint32_t(p.first)) << 32) |
                                        std::uint32_t(p.second));
    }
  };
  struct MergeTarget {
    std::size_t rank;
    TokenId result;
  };

  void rebuild_index();
  std::vector<TokenId> encode_word(const std::vector<std::string>& symbols) const;

  std::vector<std::string> tokens_;
  std::vector<Merge> merges_;
  std::size_t alphabet_size_ = 0;
  std::unordered_map<std::string, TokenId> ids_;
  std::unordered_map<std::pair<TokenId, TokenId>, MergeTarget, PairHash> ranks_;
};

// Splits a sentence into space-led words: "a  b" -> {"a", " ", " b"}.
std::vector<std::string_view> split_words(std::string_view text);

}  // namespace fuselm
