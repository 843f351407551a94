#include "recert/dataset.hpp"

#include "recert/error.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>

namespace recert {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{kUnknownToken}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty() || tokens_.front() != kUnknownToken) {
    throw Error("vocabulary must start with the unknown token");
  }
  for (std::size_t k = 0; k < tokens_.size(); ++k) {
    if (!index_.emplace(tokens_[k], static_cast<TokenId>(k)).second) {
      throw Error("duplicate vocabulary entry '" + tokens_[k] + "'");
    }
  }
}

Vocabulary Vocabulary::build(std::span<const TokenSeq> texts, std::size_t cap) {
  std::map<std::string, long long> counts;
  for (const TokenSeq& text : texts) {
    for (const std::string& t : text) {
      if (t != kUnknownToken) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > cap) ranked.resize(cap);
  std::vector<std::string> tokens{kUnknownToken};
  for (auto& [token, count] : ranked) tokens.push_back(token);
  return Vocabulary(std::move(tokens));
}

TokenId Vocabulary::id(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  return tokens_.at(static_cast<std::size_t>(id));
}

std::vector<TokenId> Vocabulary::encode(const TokenSeq& text) const {
  std::vector<TokenId> out;
  out.reserve(text.size());
  for (const std::string& t : text) out.push_back(id(t));
  return out;
}

// ---------------------------------------------------------------------------

int Dataset::n_classes() const {
  int top = 2;
  for (const Example& e : examples) top = std::max(top, e.label + 1);
  return top;
}

std::vector<TokenSeq> Dataset::texts() const {
  std::vector<TokenSeq> out;
  out.reserve(examples.size());
  for (const Example& e : examples) out.push_back(e.tokens);
  return out;
}

Dataset parse_dataset(std::istream& in, const std::string& name) {
  Dataset data;
  std::string line;
  long long number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto where = [&] { return name + ":" + std::to_string(number); };
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw MalformedFile(where() + ": malformed line (expected label<TAB>text)");
    }
    const std::string label = line.substr(0, tab);
    Example ex;
    try {
      std::size_t used = 0;
      ex.label = std::stoi(label, &used);
      if (used != label.size() || ex.label < 0) throw MalformedFile("");
    } catch (const std::exception&) {
      throw MalformedFile(where() + ": label '" + label + "' is not a non-negative integer");
    }
    ex.tokens = tokenize(std::string_view(line).substr(tab + 1));
    if (ex.tokens.empty()) throw MalformedFile(where() + ": empty text");
    data.examples.push_back(std::move(ex));
  }
  if (data.examples.empty()) throw MalformedFile(name + ": no examples");
  return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return parse_dataset(in, path.string());
}

}  // namespace recert
