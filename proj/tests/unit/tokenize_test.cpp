#include <gtest/gtest.h>

#include "evil/tokenize.hpp"

namespace evil {
namespace {

std::vector<std::string> toks(std::string_view s) { return tokenize(s).tokens(); }

TEST(Tokenize, SplitsPunctuationAndLowercases) {
  EXPECT_EQ(toks("A man, smiling."), (std::vector<std::string>{"a", "man", ",", "smiling", "."}));
}

TEST(Tokenize, EmptyText) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("   \t\n").empty());
}

TEST(Tokenize, Clitic) {
  EXPECT_EQ(toks("It's blue"), (std::vector<std::string>{"it", "'s", "blue"}));
  EXPECT_EQ(toks("dogs' bowls"), (std::vector<std::string>{"dogs", "'", "bowls"}));
}

TEST(Tokenize, EveryPunctuationCharIsItsOwnToken) {
  EXPECT_EQ(toks("(hi)!?"), (std::vector<std::string>{"(", "hi", ")", "!", "?"}));
  EXPECT_EQ(toks("e-vil"), (std::vector<std::string>{"e", "-", "vil"}));
}

TEST(Tokenize, NonAsciiBytesStayInWords) {
  EXPECT_EQ(toks("Café au lait"), (std::vector<std::string>{"café", "au", "lait"}));
}

TEST(Tokenize, Deterministic) {
  const std::string s = "The dog's ball, it is RED; isn't it?";
  EXPECT_EQ(tokenize(s), tokenize(s));
  EXPECT_EQ(tokenize(s).joined(), "the dog 's ball , it is red ; isn 't it ?");
}

}  // namespace
}  // namespace evil
