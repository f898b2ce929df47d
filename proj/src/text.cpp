#include "aita/text.hpp"

#include <algorithm>
#include <cctype>

namespace aita::text {

namespace {

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(unsigned char c) {
    return c < 0x80 && std::ispunct(c) != 0;
}

unsigned char lower(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c - 'A' + 'a') : c;
}

}  // namespace

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(lower(static_cast<unsigned char>(c)));
    return out;
}

std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool is_blank(std::string_view s) {
    return trim(s).empty();
}

std::vector<std::string> tokenize(std::string_view s) {
    std::vector<std::string> terms;
    std::string current;
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_space(c)) {
            if (!current.empty()) {
                terms.push_back(std::move(current));
                current.clear();
            }
        } else if (!is_ascii_punct(c)) {
            current.push_back(static_cast<char>(lower(c)));
        }
    }
    if (!current.empty()) terms.push_back(std::move(current));
    return terms;
}

std::size_t word_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char ch : s) {
        if (is_space(static_cast<unsigned char>(ch))) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

std::vector<std::size_t> code_point_offsets(std::string_view s) {
    std::vector<std::size_t> offsets;
    offsets.reserve(s.size() + 1);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto c = static_cast<unsigned char>(s[i]);
        const bool continuation = (c & 0xC0) == 0x80;
        if (!continuation || offsets.empty()) offsets.push_back(i);
    }
    offsets.push_back(s.size());
    return offsets;
}

std::size_t code_point_length(std::string_view s) {
    return code_point_offsets(s).size() - 1;
}

std::size_t ifind(std::string_view haystack, std::string_view needle, std::size_t pos) {
    if (needle.empty()) return pos <= haystack.size() ? pos : std::string_view::npos;
    if (haystack.size() < needle.size()) return std::string_view::npos;
    for (std::size_t i = pos; i + needle.size() <= haystack.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < needle.size(); ++j) {
            if (lower(static_cast<unsigned char>(haystack[i + j])) !=
                lower(static_cast<unsigned char>(needle[j]))) {
                match = false;
                break;
            }
        }
        if (match) return i;
    }
    return std::string_view::npos;
}

std::string replace_all(std::string_view s, std::string_view from, std::string_view to) {
    if (from.empty()) return std::string(s);
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto hit = s.find(from, pos);
        if (hit == std::string_view::npos) break;
        out.append(s.substr(pos, hit - pos));
        out.append(to);
        pos = hit + from.size();
    }
    out.append(s.substr(pos));
    return out;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return 0;
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos;
         pos = haystack.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

}  // namespace aita::text
