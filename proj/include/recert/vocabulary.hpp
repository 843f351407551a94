#pragma once

#include "recert/perturbation.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace recert {

using TokenId = int;

/// Token <-> id bijection. Id 0 is reserved for unknown tokens.
class Vocabulary {
 public:
  static constexpr TokenId kUnknown = 0;
  static constexpr const char* kUnknownToken = "<unk>";
  static constexpr std::size_t kDefaultCap = 20'000;

  Vocabulary();
  /// tokens[0] must be the unknown token.
  explicit Vocabulary(std::vector<std::string> tokens);

  /// The `cap` most frequent tokens (ties broken lexicographically) plus <unk>.
  static Vocabulary build(std::span<const TokenSeq> texts, std::size_t cap = kDefaultCap);

  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::vector<TokenId> encode(const TokenSeq& text) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace recert
