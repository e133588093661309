#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fuselm::utf8 {

// True when `text` is well-formed UTF-8 (no overlongs, no surrogates).
bool valid(std::string_view text);

// Splits well-formed UTF-8 into one string per code point.
// Malformed input throws IoError.
std::vector<std::string> code_points(std::string_view text);

}  // namespace fuselm::utf8
