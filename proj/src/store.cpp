#include "fuselm/store.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fuselm/binary_io.hpp"
#include "fuselm/error.hpp"

namespace fuselm {
namespace {

constexpr std::string_view kMagic = "ARTF";

std::string key_name(StoreKey key) {
  return "(sentence_idx=" + std::to_string(key.sentence_idx) +
         ", prefix_len=" + std::to_string(key.prefix_len) + ")";
}

void check_header(const StoreHeader& h, const std::string& what) {
  if (static_cast<std::uint8_t>(h.kind) > 2) throw FormatError(what + ": unknown artefact kind");
  if (h.dim == 0) throw FormatError(what + ": dim must be positive");
  if (static_cast<std::uint8_t>(h.crop.side) > 2) throw FormatError(what + ": unknown crop side");
  if (h.crop.pct_milli > 1000) throw FormatError(what + ": crop_pct_milli above 1000");
  if (h.crop.side == CropSide::None && h.crop.pct_milli != 0) {
    throw FormatError(what + ": crop_pct_milli must be 0 when crop_side is none");
  }
  if (h.kind != StoreKind::DensePrefix && h.crop.side != CropSide::None) {
    throw FormatError(what + ": only dense-prefix stores may be cropped");
  }
}

}  // namespace

const char* to_string(StoreKind kind) {
  switch (kind) {
    case StoreKind::DensePrefix: return "dense-prefix";
    case StoreKind::DenseFull: return "dense-full";
    case StoreKind::DenseFullMasked: return "dense-full-masked";
  }
  return "dense-prefix";
}

ArtefactKind artefact_kind(StoreKind kind) {
  switch (kind) {
    case StoreKind::DensePrefix: return ArtefactKind::DensePrefix;
    case StoreKind::DenseFull: return ArtefactKind::DenseFull;
    case StoreKind::DenseFullMasked: return ArtefactKind::DenseFullMasked;
  }
  return ArtefactKind::DensePrefix;
}

ArtefactStore ArtefactStore::open(const std::filesystem::path& path) {
  return parse(binary::read_file(path), path.string());
}

ArtefactStore ArtefactStore::parse(std::string_view bytes, std::string origin) {
  binary::Reader in(bytes, "ARTF " + origin);
  const auto& what = in.what();
  if (in.take(4) != kMagic) throw FormatError(what + ": bad magic");
  if (const auto version = in.get<std::uint32_t>(); version != kVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  ArtefactStore store;
  store.origin_ = std::move(origin);
  auto& h = store.header_;
  const auto kind = in.get<std::uint8_t>();
  if (kind > 2) throw FormatError(what + ": unknown artefact kind " + std::to_string(kind));
  h.kind = static_cast<StoreKind>(kind);
  const auto reserved = in.take(3);
  if (reserved.find_first_not_of('\0') != std::string_view::npos) {
    throw FormatError(what + ": reserved bytes must be zero");
  }
  h.dim = in.get<std::uint32_t>();
  const auto side = in.get<std::uint8_t>();
  if (side > 2) throw FormatError(what + ": unknown crop side " + std::to_string(side));
  h.crop.side = static_cast<CropSide>(side);
  h.crop.pct_milli = in.get<std::uint16_t>();
  h.record_count = in.get<std::uint64_t>();
  check_header(h, what);

  const std::uint64_t record_bytes = 12 + 4 * std::uint64_t{h.dim};
  const std::uint64_t payload = in.remaining();
  if (h.record_count > payload / record_bytes || h.record_count * record_bytes != payload) {
    throw FormatError(what + ": " + std::to_string(h.record_count) + " records of dim " +
                      std::to_string(h.dim) + " do not match " + std::to_string(payload) +
                      " payload bytes");
  }

  store.keys_.reserve(h.record_count);
  store.values_.resize(h.record_count * h.dim);
  for (std::uint64_t r = 0; r < h.record_count; ++r) {
    StoreKey key;
    key.sentence_idx = in.get<std::uint64_t>();
    key.prefix_len = in.get<std::uint32_t>();
    if (!store.keys_.empty() && !(store.keys_.back() < key)) {
      throw FormatError(what + ": record " + std::to_string(r) + " key " + key_name(key) +
                        " is not strictly increasing");
    }
    if (h.kind == StoreKind::DenseFull && key.prefix_len != 0) {
      throw FormatError(what + ": dense-full record " + key_name(key) + " must have prefix_len 0");
    }
    if (h.kind != StoreKind::DenseFull && !store.keys_.empty() &&
        store.keys_.back().sentence_idx == key.sentence_idx &&
        store.keys_.back().prefix_len + 1 != key.prefix_len) {
      throw FormatError(what + ": gap in prefix lengths before " + key_name(key));
    }
    if (h.kind != StoreKind::DenseFull && key.prefix_len != 0 &&
        (store.keys_.empty() || store.keys_.back().sentence_idx != key.sentence_idx)) {
      throw FormatError(what + ": sentence " + std::to_string(key.sentence_idx) + " does not start at prefix_len 0");
    }
    const auto raw = in.take(4 * std::size_t{h.dim});
    float* dst = store.values_.data() + r * h.dim;
    std::memcpy(dst, raw.data(), raw.size());
    for (std::uint32_t i = 0; i < h.dim; ++i) {
      if (!std::isfinite(dst[i])) {
        throw FormatError(what + ": non-finite value in record " + key_name(key));
      }
    }
    store.keys_.push_back(key);
  }
  return store;
}

std::span<const float> ArtefactStore::values_at(std::size_t record) const {
  return std::span(values_).subspan(record * header_.dim, header_.dim);
}

std::optional<std::size_t> ArtefactStore::find(StoreKey key) const {
  if (header_.kind == StoreKind::DenseFull) key.prefix_len = 0;
  const auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
  if (it == keys_.end() || *it != key) return std::nullopt;
  return static_cast<std::size_t>(it - keys_.begin());
}

Artefact ArtefactStore::lookup(std::uint64_t sentence_idx, std::uint32_t prefix_len) const {
  const StoreKey key{sentence_idx, prefix_len};
  const auto idx = find(key);
  if (!idx) throw LookupError("artefact store " + origin_ + " has no record " + key_name(key));
  const auto v = values_at(*idx);
  return {std::vector<double>(v.begin(), v.end()), artefact_kind(header_.kind)};
}

std::size_t ArtefactStore::num_sentences() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    if (i == 0 || keys_[i].sentence_idx != keys_[i - 1].sentence_idx) ++n;
  }
  return n;
}

std::string encode_store(StoreHeader header, std::vector<StoreRecord> records) {
  header.record_count = records.size();
  check_header(header, "encode_store");
  std::sort(records.begin(), records.end(),
            [](const StoreRecord& a, const StoreRecord& b) { return a.key < b.key; });
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.values.size() != header.dim) {
      throw ConfigError("encode_store: record " + key_name(r.key) + " has " +
                        std::to_string(r.values.size()) + " values, header dim is " +
                        std::to_string(header.dim));
    }
    if (i > 0 && records[i - 1].key == r.key) throw ConfigError("encode_store: duplicate key " + key_name(r.key));
    for (float x : r.values) {
      if (!std::isfinite(x)) throw ConfigError("encode_store: non-finite value in " + key_name(r.key));
    }
  }

  binary::Writer out;
  out.put_bytes(kMagic);
  out.put<std::uint32_t>(ArtefactStore::kVersion);
  out.put<std::uint8_t>(static_cast<std::uint8_t>(header.kind));
  out.put_bytes(std::string_view("\0\0\0", 3));
  out.put<std::uint32_t>(header.dim);
  out.put<std::uint8_t>(static_cast<std::uint8_t>(header.crop.side));
  out.put<std::uint16_t>(header.crop.pct_milli);
  out.put<std::uint64_t>(header.record_count);
  for (const auto& r : records) {
    out.put<std::uint64_t>(r.key.sentence_idx);
    out.put<std::uint32_t>(r.key.prefix_len);
    for (float x : r.values) out.put<float>(x);
  }
  return out.take();
}

void write_store(const std::filesystem::path& path, StoreHeader header,
                 std::vector<StoreRecord> records) {
  binary::write_file_atomic(path, encode_store(header, std::move(records)));
}

}  // namespace fuselm
