#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace aita::text {

std::string to_lower_ascii(std::string_view s);

std::string_view trim(std::string_view s);

bool is_blank(std::string_view s);

/// Index terms: ASCII-lowercased, ASCII punctuation deleted, split on whitespace.
/// Bytes >= 0x80 pass through untouched, so UTF-8 words survive as opaque terms.
std::vector<std::string> tokenize(std::string_view s);

/// Whitespace-delimited word count.
std::size_t word_count(std::string_view s);

/// Byte offset of every UTF-8 code point start, plus a final entry equal to s.size().
/// Invalid continuation bytes are treated as single-byte code points.
std::vector<std::size_t> code_point_offsets(std::string_view s);

std::size_t code_point_length(std::string_view s);

/// Case-insensitive (ASCII) search for needle in haystack starting at pos.
std::size_t ifind(std::string_view haystack, std::string_view needle, std::size_t pos = 0);

/// Replace every literal occurrence of `from` with `to` (case-sensitive, non-overlapping).
std::string replace_all(std::string_view s, std::string_view from, std::string_view to);

std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

}  // namespace aita::text
