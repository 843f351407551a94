#pragma once

#include "recert/perturbation.hpp"
#include "recert/vocabulary.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace recert {

struct Example {
  TokenSeq tokens;
  int label = 0;
};

struct Dataset {
  std::vector<Example> examples;

  /// max label + 1, at least 2.
  int n_classes() const;
  std::vector<TokenSeq> texts() const;
};

/// `label<TAB>text` per line; text is whitespace-tokenized and lowercased.
/// Throws MalformedFile naming the line, or on an empty file.
Dataset parse_dataset(std::istream& in, const std::string& name = "<stream>");
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace recert
