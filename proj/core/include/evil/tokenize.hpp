#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace evil {

class TokenSequence;
TokenSequence tokenize(std::string_view text);

/// Lowercased tokens of one sentence. Only `tokenize` creates these, so every
/// token is non-empty.
class TokenSequence {
 public:
  TokenSequence() = default;

  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const std::string& operator[](std::size_t i) const { return tokens_[i]; }
  auto begin() const { return tokens_.begin(); }
  auto end() const { return tokens_.end(); }

  /// Tokens joined by single spaces.
  std::string joined() const;

  bool operator==(const TokenSequence&) const = default;

 private:
  friend TokenSequence tokenize(std::string_view text);
  std::vector<std::string> tokens_;
};

/// Lowercases ASCII, splits on whitespace, and splits every punctuation
/// character into its own token. An apostrophe between a word and a letter
/// starts a clitic token: "it's" -> [it, 's]. Bytes >= 0x80 are word
/// characters.
TokenSequence tokenize(std::string_view text);

}  // namespace evil
