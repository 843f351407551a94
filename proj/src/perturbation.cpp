#include "recert/perturbation.hpp"

#include "recert/error.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

namespace recert {

std::string lowercase(std::string_view text) {
  std::string out(text);
  for (char& ch : out) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80) ch = static_cast<char>(std::tolower(u));
  }
  return out;
}

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) out.push_back(lowercase(word));
  return out;
}

std::string join_tokens(const TokenSeq& tokens) {
  std::string out;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (k > 0) out += ' ';
    out += tokens[k];
  }
  return out;
}

// ---------------------------------------------------------------------------

Transformation::Transformation(std::string name, Match match, Replace replace)
    : name_(std::move(name)), match_(std::move(match)), replace_(std::move(replace)) {}

bool Transformation::matches(const std::string& token) const {
  return match_(token) && !replace(token).empty();
}

std::vector<TokenSeq> Transformation::replace(const std::string& token) const {
  if (!match_(token)) return {};
  std::vector<TokenSeq> out;
  for (TokenSeq& seq : replace_(token)) {
    if (seq.size() == 1 && seq.front() == token) continue;
    if (std::find(out.begin(), out.end(), seq) != out.end()) continue;
    out.push_back(std::move(seq));
  }
  return out;
}

Transformation make_delete(std::set<std::string> stopwords) {
  if (stopwords.empty()) throw Error("Del needs a non-empty stopword set");
  auto words = std::make_shared<const std::set<std::string>>(std::move(stopwords));
  return Transformation(
      "Del", [words](const std::string& t) { return words->count(t) > 0; },
      [](const std::string&) { return std::vector<TokenSeq>{TokenSeq{}}; });
}

Transformation make_substitute(std::string name, SynonymTable table) {
  if (table.empty()) throw Error(name + " needs a non-empty substitution table");
  auto shared = std::make_shared<const SynonymTable>(std::move(table));
  return Transformation(
      std::move(name), [shared](const std::string& t) { return shared->count(t) > 0; },
      [shared](const std::string& t) {
        std::vector<TokenSeq> out;
        const auto it = shared->find(t);
        if (it == shared->end()) return out;
        for (const std::string& alt : it->second) out.push_back({alt});
        return out;
      });
}

Transformation make_duplicate() {
  return Transformation(
      "Dup", [](const std::string&) { return true; },
      [](const std::string& t) { return std::vector<TokenSeq>{{t, t}}; });
}

Transformation builtin(std::string_view name, const BuiltinResources& resources) {
  if (name == "Del") return make_delete(resources.stopwords);
  if (name == "Sub" || name == "SubSyn") return make_substitute(std::string(name), resources.table);
  if (name == "Dup") return make_duplicate();
  throw UnknownTransformation("unknown transformation '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

PerturbationSpace::PerturbationSpace(std::vector<SpaceItem> items) : items_(std::move(items)) {
  std::set<std::string> names;
  for (const SpaceItem& item : items_) {
    if (item.budget < 0) throw Error("negative budget for " + item.transformation.name());
    if (!names.insert(item.transformation.name()).second) {
      throw Error("transformation '" + item.transformation.name() + "' appears twice in a space");
    }
  }
}

std::vector<int> PerturbationSpace::budgets() const {
  std::vector<int> out;
  out.reserve(items_.size());
  for (const SpaceItem& item : items_) out.push_back(item.budget);
  return out;
}

int PerturbationSpace::total_budget() const {
  const auto b = budgets();
  return std::accumulate(b.begin(), b.end(), 0);
}

PerturbationSpace PerturbationSpace::with_budgets(std::span<const int> budgets) const {
  if (budgets.size() != items_.size()) throw ShapeError("with_budgets: one budget per item");
  std::vector<SpaceItem> items = items_;
  for (std::size_t k = 0; k < items.size(); ++k) items[k].budget = budgets[k];
  return PerturbationSpace(std::move(items));
}

// ---------------------------------------------------------------------------

namespace {

struct Rewrite {
  std::size_t item;
  TokenSeq tokens;
};

class Enumerator {
 public:
  Enumerator(const PerturbationSpace& space, const TokenSeq& x, std::size_t cap)
      : x_(x), cap_(cap), budgets_(space.budgets()) {
    rewrites_.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
      for (std::size_t k = 0; k < space.size(); ++k) {
        for (TokenSeq& seq : space.items()[k].transformation.replace(x[j])) {
          rewrites_[j].push_back({k, std::move(seq)});
        }
      }
    }
  }

  std::vector<PerturbedString> run() {
    visit(0);
    return std::move(out_);
  }

 private:
  void visit(std::size_t j) {
    if (j == x_.size()) {
      if (++derivations_ > cap_) {
        throw EnumerationLimit("perturbation space exceeds the enumeration cap of " +
                               std::to_string(cap_) + " derivations");
      }
      if (!current_.tokens.empty() && seen_.insert(current_.tokens).second) {
        out_.push_back(current_);
      }
      return;
    }
    const int source = static_cast<int>(j) + 1;
    emit({x_[j]}, source);
    visit(j + 1);
    retract(1);
    for (const Rewrite& r : rewrites_[j]) {
      if (budgets_[r.item] == 0) continue;
      --budgets_[r.item];
      emit(r.tokens, source);
      visit(j + 1);
      retract(r.tokens.size());
      ++budgets_[r.item];
    }
  }

  void emit(const TokenSeq& tokens, int source) {
    for (const std::string& t : tokens) {
      current_.tokens.push_back(t);
      current_.mapping.push_back(source);
    }
  }

  void retract(std::size_t count) {
    current_.tokens.resize(current_.tokens.size() - count);
    current_.mapping.resize(current_.mapping.size() - count);
  }

  const TokenSeq& x_;
  std::size_t cap_;
  std::vector<int> budgets_;
  std::vector<std::vector<Rewrite>> rewrites_;
  PerturbedString current_;
  std::set<TokenSeq> seen_;
  std::vector<PerturbedString> out_;
  std::size_t derivations_ = 0;
};

}  // namespace

std::vector<PerturbedString> enumerate_space(const PerturbationSpace& space, const TokenSeq& x,
                                             std::size_t cap) {
  if (x.empty()) throw Error("enumerate_space: empty input");
  return Enumerator(space, x, cap).run();
}

SynonymTable load_synonyms(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open synonym table " + path.string());
  SynonymTable table;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t tab = line.find('\t', start);
      const std::string field =
          lowercase(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (!field.empty()) fields.push_back(field);
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() < 2) continue;
    auto& alts = table[fields.front()];
    for (std::size_t k = 1; k < fields.size(); ++k) {
      if (fields[k] != fields.front() &&
          std::find(alts.begin(), alts.end(), fields[k]) == alts.end()) {
        alts.push_back(fields[k]);
      }
    }
    if (alts.empty()) table.erase(fields.front());
  }
  return table;
}

std::set<std::string> load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open stopword list " + path.string());
  std::set<std::string> words;
  std::string word;
  while (in >> word) words.insert(lowercase(word));
  return words;
}

}  // namespace recert
