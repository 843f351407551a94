#pragma once

// Programmable perturbation spaces: a list of (transformation, budget)
// pairs. A transformation matches single tokens and rewrites a matched token
// into one of a finite set of token sequences (empty = deletion). Each
// transformation may be applied up to its budget times, to distinct original
// positions, and each original position is rewritten at most once.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace recert {

using TokenSeq = std::vector<std::string>;

/// Whitespace split, ASCII-lowercased.
TokenSeq tokenize(std::string_view text);
std::string lowercase(std::string_view text);
std::string join_tokens(const TokenSeq& tokens);

class Transformation {
 public:
  using Match = std::function<bool(const std::string&)>;
  using Replace = std::function<std::vector<TokenSeq>(const std::string&)>;

  Transformation(std::string name, Match match, Replace replace);

  const std::string& name() const { return name_; }
  bool matches(const std::string& token) const;
  /// Rewrites of a token; empty when it does not match. The identity rewrite
  /// {token} is never included.
  std::vector<TokenSeq> replace(const std::string& token) const;

 private:
  std::string name_;
  Match match_;
  Replace replace_;
};

using SynonymTable = std::map<std::string, std::vector<std::string>>;

Transformation make_delete(std::set<std::string> stopwords);
/// Word -> alternatives. Used for both Sub and SubSyn.
Transformation make_substitute(std::string name, SynonymTable table);
/// Rewrites any token x into "x x".
Transformation make_duplicate();

struct BuiltinResources {
  std::set<std::string> stopwords;
  SynonymTable table;
};

/// One of Del, Sub, SubSyn, Dup.
Transformation builtin(std::string_view name, const BuiltinResources& resources = {});

struct SpaceItem {
  Transformation transformation;
  int budget = 0;
};

class PerturbationSpace {
 public:
  PerturbationSpace() = default;
  explicit PerturbationSpace(std::vector<SpaceItem> items);

  const std::vector<SpaceItem>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::vector<int> budgets() const;
  int total_budget() const;
  /// Same transformations, different budgets.
  PerturbationSpace with_budgets(std::span<const int> budgets) const;

 private:
  std::vector<SpaceItem> items_;
};

struct PerturbedString {
  TokenSeq tokens;
  /// mapping[i] is the 1-based original position that produced tokens[i].
  std::vector<int> mapping;
};

inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

/// Every distinct non-empty string in S(x), each with one index mapping,
/// in depth-first derivation order (x itself first). Throws EnumerationLimit
/// when more than `cap` derivations are generated.
std::vector<PerturbedString> enumerate_space(const PerturbationSpace& space, const TokenSeq& x,
                                             std::size_t cap = kDefaultEnumerationCap);

/// `word<TAB>alt1<TAB>alt2...` per line.
SynonymTable load_synonyms(const std::filesystem::path& path);
/// One word per line.
std::set<std::string> load_stopwords(const std::filesystem::path& path);

/// space := item ("," item)* ; item := NAME "(" args ")" ":" INT
/// e.g. "Dup():2,SubSyn(syn.tsv):2". Resource paths are resolved against
/// `resource_dir` unless absolute.
PerturbationSpace parse_space_spec(std::string_view text,
                                   const std::filesystem::path& resource_dir = ".");

}  // namespace recert
