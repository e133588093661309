#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fuselm/artefact.hpp"

namespace fuselm {

// On-disk artefact kinds; the numeric values are the ARTF encoding.
enum class StoreKind : std::uint8_t { DensePrefix = 0, DenseFull = 1, DenseFullMasked = 2 };

const char* to_string(StoreKind kind);
ArtefactKind artefact_kind(StoreKind kind);

struct StoreKey {
  std::uint64_t sentence_idx = 0;
  std::uint32_t prefix_len = 0;

  auto operator<=>(const StoreKey&) const = default;
};

struct StoreHeader {
  StoreKind kind = StoreKind::DensePrefix;
  std::uint32_t dim = 0;
  CropSpec crop;
  std::uint64_t record_count = 0;
};

// Precomputed dense artefacts keyed by (sentence_idx, prefix_len).
//
// ARTF layout, little-endian:
//   "ARTF" | u32 version=1 | u8 kind | u8[3] reserved=0 | u32 dim |
//   u8 crop_side | u16 crop_pct_milli | u64 record_count |
//   record_count x (u64 sentence_idx | u32 prefix_len | dim x f32)
// Records are strictly increasing in (sentence_idx, prefix_len).
class ArtefactStore {
 public:
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 27;

  // Whole-file load. Any structural problem throws FormatError.
  static ArtefactStore open(const std::filesystem::path& path);
  static ArtefactStore parse(std::string_view bytes, std::string origin = "<memory>");

  const StoreHeader& header() const { return header_; }
  std::size_t dim() const { return header_.dim; }
  std::size_t size() const { return keys_.size(); }
  const std::vector<StoreKey>& keys() const { return keys_; }
  std::span<const float> values_at(std::size_t record) const;
  const std::string& origin() const { return origin_; }

  bool contains(StoreKey key) const { return find(key).has_value(); }
  std::optional<std::size_t> find(StoreKey key) const;

  // Stored vector, unmodified. Missing keys throw LookupError naming the key.
  // For dense-full stores the prefix length is ignored.
  Artefact lookup(std::uint64_t sentence_idx, std::uint32_t prefix_len) const;

  // Number of distinct sentences with at least one record.
  std::size_t num_sentences() const;

 private:
  StoreHeader header_;
  std::vector<StoreKey> keys_;
  std::vector<float> values_;
  std::string origin_;
};

struct StoreRecord {
  StoreKey key;
  std::vector<float> values;
};

// Serialises records (sorted here) into ARTF bytes. Rejects duplicate keys,
// non-finite values and dimension mismatches.
std::string encode_store(StoreHeader header, std::vector<StoreRecord> records);

void write_store(const std::filesystem::path& path, StoreHeader header,
                 std::vector<StoreRecord> records);

}  // namespace fuselm
