#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace crt {

using TokenId = std::int32_t;
// Token ids, <bos> first and an optional trailing <eos>.
using TokenSequence = std::vector<TokenId>;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr std::size_t kSpecialCount = 4;

// Lowercases, splits on whitespace and peels trailing .,!? into their own
// tokens. Hyphenated words stay whole. Never fails.
std::vector<std::string> tokenize(std::string_view sentence);
// Space-joined, with punctuation tokens attached to the preceding word.
std::string detokenize(std::span<const std::string> tokens);

class Vocabulary {
 public:
  // Specials only.
  Vocabulary();
  // Rebuild from an id-ordered token list; the first four entries must be
  // the specials.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id(std::string_view token) const;  // <unk> when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // [<bos>, ids..., <eos>]
  TokenSequence encode(std::string_view sentence) const;
  // Words only; specials are dropped.
  std::vector<std::string> words(std::span<const TokenId> ids) const;
  std::string decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Tokens with count ≥ min_count, ordered by (count desc, token asc), after
// the specials. Throws on an empty corpus.
Vocabulary build_vocab(std::span<const std::string> sentences, std::size_t min_count = 1);

}  // namespace crt
