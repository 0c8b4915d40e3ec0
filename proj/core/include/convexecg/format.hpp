#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace convexecg {

// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

// Strict full-string parse; rejects trailing junk, empty text and non-finite
// spellings ("nan", "inf").
std::optional<double> parse_double(std::string_view text);

std::string_view trim(std::string_view text);

std::vector<std::string_view> split_view(std::string_view text, char sep);

// 64-bit FNV-1a over raw bytes; used as a content digest in run manifests.
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace convexecg
