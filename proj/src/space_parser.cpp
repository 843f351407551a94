#include "recert/error.hpp"
#include "recert/perturbation.hpp"

#include <cctype>
#include <set>

namespace recert {
namespace {

class SpecParser {
 public:
  SpecParser(std::string_view text, const std::filesystem::path& resource_dir)
      : text_(text), dir_(resource_dir) {}

  PerturbationSpace parse() {
    std::vector<SpaceItem> items;
    skip_space();
    if (at_end()) return PerturbationSpace();
    items.push_back(item());
    skip_space();
    while (!at_end()) {
      expect(',');
      items.push_back(item());
      skip_space();
    }
    return PerturbationSpace(std::move(items));
  }

 private:
  SpaceItem item() {
    skip_space();
    const std::size_t name_at = pos_;
    std::string name;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) {
      name += text_[pos_++];
    }
    if (name.empty()) throw SpecSyntaxError("expected a transformation name", pos_);
    skip_space();
    expect('(');
    std::string arg;
    while (!at_end() && peek() != ')') arg += text_[pos_++];
    expect(')');
    skip_space();
    expect(':');
    skip_space();
    const std::size_t budget_at = pos_;
    std::string digits;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) digits += text_[pos_++];
    if (digits.empty()) throw SpecSyntaxError("expected a budget", budget_at);
    if (digits.size() > 6) throw SpecSyntaxError("budget too large", budget_at);
    if (!seen_.insert(name).second) throw SpecSyntaxError(name + " listed twice", name_at);
    const int budget = std::stoi(digits);
    return {resolve(name, trim(arg), name_at), budget};
  }

  Transformation resolve(const std::string& name, const std::string& arg, std::size_t at) {
    if (name == "Dup") {
      if (!arg.empty()) throw SpecSyntaxError("Dup takes no arguments", at);
      return make_duplicate();
    }
    if (name == "Del" || name == "Sub" || name == "SubSyn") {
      if (arg.empty()) throw SpecSyntaxError(name + " needs a resource file argument", at);
      std::filesystem::path path(arg);
      if (path.is_relative()) path = dir_ / path;
      BuiltinResources res;
      if (name == "Del") {
        res.stopwords = load_stopwords(path);
      } else {
        res.table = load_synonyms(path);
      }
      return builtin(name, res);
    }
    throw UnknownTransformation("unknown transformation '" + name + "' at offset " +
                                std::to_string(at));
  }

  static std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
  }

  void expect(char ch) {
    if (at_end() || peek() != ch) {
      throw SpecSyntaxError(std::string("expected '") + ch + "'", pos_);
    }
    ++pos_;
  }
  void skip_space() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  std::string_view text_;
  std::filesystem::path dir_;
  std::size_t pos_ = 0;
  std::set<std::string> seen_;
};

}  // namespace

PerturbationSpace parse_space_spec(std::string_view text,
                                   const std::filesystem::path& resource_dir) {
  return SpecParser(text, resource_dir).parse();
}

}  // namespace recert
