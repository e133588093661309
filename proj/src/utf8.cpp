#include "fuselm/utf8.hpp"

#include <cstdint>

#include "fuselm/error.hpp"

namespace fuselm::utf8 {
namespace {

// Length of the sequence starting at text[pos], or 0 if malformed.
std::size_t sequence_length(std::string_view text, std::size_t pos) {
  const auto lead = static_cast<std::uint8_t>(text[pos]);
  std::size_t len = 0;
  std::uint32_t cp = 0;
  if (lead < 0x80) return 1;
  if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
  } else {
    return 0;
  }
  if (pos + len > text.size()) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const auto cont = static_cast<std::uint8_t>(text[pos + i]);
    if ((cont & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (cont & 0x3F);
  }
  static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
  return len;
}

}  // namespace

bool valid(std::string_view text) {
  for (std::size_t pos = 0; pos < text.size();) {
    const auto len = sequence_length(text, pos);
    if (len == 0) return false;
    pos += len;
  }
  return true;
}

std::vector<std::string> code_points(std::string_view text) {
  std::vector<std::string> out;
  out.reserve(text.size());
  for (std::size_t pos = 0; pos < text.size();) {
    const auto len = sequence_length(text, pos);
    if (len == 0) throw IoError("invalid UTF-8 at byte " + std::to_string(pos));
    out.emplace_back(text.substr(pos, len));
    pos += len;
  }
  return out;
}

}  // namespace fuselm::utf8
