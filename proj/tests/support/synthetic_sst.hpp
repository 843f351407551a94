#pragma once

// Small sentiment corpus in the style of SST2: short sentences with one or
// two polar words of the same polarity among neutral filler. Synonyms never
// cross polarity, so every member of S(x) keeps the label of x.

#include "recert/dataset.hpp"
#include "recert/perturbation.hpp"

#include <cstdint>
#include <filesystem>

namespace recert::synthetic {

struct SstConfig {
  std::size_t train = 2000;
  std::size_t test = 500;
  std::uint64_t seed = 1;
  int min_length = 4;
  int max_length = 8;
  /// Only sentences with |S(x)| <= max_space under the reference space.
  std::size_t max_space = 1000;
  int dup_budget = 2;
  int sub_budget = 2;
};

struct SstData {
  Dataset train;
  Dataset test;
  SynonymTable synonyms;
};

SynonymTable sst_synonyms();
PerturbationSpace sst_space(const SynonymTable& table, int dup_budget, int sub_budget);
SstData make_sst(const SstConfig& config);

void write_tsv(const std::filesystem::path& path, const Dataset& data);
void write_synonyms(const std::filesystem::path& path, const SynonymTable& table);

}  // namespace recert::synthetic
