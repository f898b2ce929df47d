#include <gtest/gtest.h>

#include "aita/text.hpp"

using namespace aita::text;

TEST(Tokenize, LowercasesAndDeletesPunctuation) {
    EXPECT_EQ(tokenize("Hello, World!  it's"), (std::vector<std::string>{"hello", "world", "its"}));
    EXPECT_EQ(tokenize("re-use"), (std::vector<std::string>{"reuse"}));
    EXPECT_TRUE(tokenize("  ... ").empty());
    EXPECT_TRUE(tokenize("").empty());
}

TEST(Tokenize, KeepsNonAsciiBytes) {
    const auto t = tokenize("Café NUKE");
    ASSERT_EQ(t.size(), 2u);
    EXPECT_EQ(t[0], "café");
    EXPECT_EQ(t[1], "nuke");
}

TEST(Text, TrimAndBlank) {
    EXPECT_EQ(trim("  a b \n"), "a b");
    EXPECT_TRUE(is_blank(" \t\n"));
    EXPECT_FALSE(is_blank(" x "));
}

TEST(Text, WordCount) {
    EXPECT_EQ(word_count("one two  three\nfour"), 4u);
    EXPECT_EQ(word_count(""), 0u);
}

TEST(Text, CodePoints) {
    EXPECT_EQ(code_point_length("abc"), 3u);
    EXPECT_EQ(code_point_length("é€𝄞"), 3u);
    const auto offs = code_point_offsets("aé");
    EXPECT_EQ(offs, (std::vector<std::size_t>{0, 1, 3}));
}

TEST(Text, CaseInsensitiveFind) {
    EXPECT_EQ(ifind("How do I Install NUKE", "install nuke"), 9u);
    EXPECT_EQ(ifind("abc", "zz"), std::string_view::npos);
    EXPECT_EQ(count_occurrences("a-b-a-b-a", "a"), 3u);
    EXPECT_EQ(replace_all("x.y.z", ".", "::"), "x::y::z");
}
