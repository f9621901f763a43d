#include "crt/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "crt/errors.hpp"

namespace crt {

namespace {

const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> specials = {"<pad>", "<bos>", "<eos>", "<unk>"};
  return specials;
}

bool is_terminal_punct(char c) { return c == '.' || c == ',' || c == '!' || c == '?'; }

bool is_punct_token(const std::string& t) {
  return t.size() == 1 && is_terminal_punct(t[0]);
}

}  // namespace

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    std::size_t end = word.size();
    while (end > 0 && is_terminal_punct(word[end - 1])) --end;
    if (end > 0) out.push_back(word.substr(0, end));
    for (std::size_t i = end; i < word.size(); ++i) out.emplace_back(1, word[i]);
    word.clear();
  };
  for (char c : sentence) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty() && !is_punct_token(t)) out.push_back(' ');
    out += t;
  }
  return out;
}

Vocabulary::Vocabulary() : Vocabulary(special_tokens()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& specials = special_tokens();
  if (tokens_.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens_.begin())) {
    throw VocabularyError("vocabulary must start with <pad>, <bos>, <eos>, <unk>");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw VocabularyError("duplicate vocabulary entry '" + tokens_[i] + "'");
    }
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.contains(std::string(token));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of size " +
                          std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSequence Vocabulary::encode(std::string_view sentence) const {
  TokenSequence ids{kBosId};
  for (const auto& t : tokenize(sentence)) ids.push_back(id(t));
  ids.push_back(kEosId);
  return ids;
}

std::vector<std::string> Vocabulary::words(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  for (TokenId i : ids) {
    if (i == kPadId || i == kBosId || i == kEosId) continue;
    out.push_back(token(i));
  }
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  return detokenize(words(ids));
}

Vocabulary build_vocab(std::span<const std::string> sentences, std::size_t min_count) {
  if (sentences.empty()) throw VocabularyError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (auto& t : tokenize(s)) ++counts[std::move(t)];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && std::find(special_tokens().begin(), special_tokens().end(), tok) ==
                              special_tokens().end()) {
      ranked.emplace_back(tok, n);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = special_tokens();
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return Vocabulary(std::move(tokens));
}

}  // namespace crt
