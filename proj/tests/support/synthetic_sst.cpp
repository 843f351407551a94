#include "synthetic_sst.hpp"

#include "recert/error.hpp"

#include <fstream>
#include <random>
#include <set>

namespace recert::synthetic {
namespace {

const std::vector<std::string> kPositive{"good",     "great",   "fine",      "nice",     "fun",
                                         "superb",   "lovely",  "brilliant", "charming", "enjoyable"};
const std::vector<std::string> kNegative{"bad",  "awful", "poor",  "dull",    "boring",
                                         "weak", "bland", "tedious", "clumsy", "terrible"};
const std::vector<std::string> kNeutral{"the",  "a",    "this",  "movie",  "film",  "story",
                                        "plot", "is",   "was",   "it",     "and",   "of",
                                        "with", "cast", "script", "ending", "scenes", "really"};

void ring(SynonymTable& table, const std::vector<std::string>& words, std::size_t hops) {
  for (std::size_t k = 0; k < words.size(); ++k) {
    for (std::size_t h = 1; h <= hops; ++h) {
      table[words[k]].push_back(words[(k + h) % words.size()]);
    }
  }
}

Example sentence(std::mt19937_64& rng, const SstConfig& config) {
  std::uniform_int_distribution<int> length(config.min_length, config.max_length);
  std::uniform_int_distribution<int> polar_count(1, 2);
  std::uniform_int_distribution<std::size_t> neutral(0, kNeutral.size() - 1);
  std::uniform_int_distribution<std::size_t> polar(0, kPositive.size() - 1);
  Example ex;
  ex.label = static_cast<int>(rng() % 2);
  const auto& words = ex.label == 1 ? kPositive : kNegative;
  const int n = length(rng);
  ex.tokens.resize(static_cast<std::size_t>(n));
  for (auto& t : ex.tokens) t = kNeutral[neutral(rng)];
  const int k = polar_count(rng);
  std::uniform_int_distribution<std::size_t> where(0, static_cast<std::size_t>(n) - 1);
  for (int p = 0; p < k; ++p) ex.tokens[where(rng)] = words[polar(rng)];
  return ex;
}

}  // namespace

SynonymTable sst_synonyms() {
  SynonymTable table;
  ring(table, kPositive, 2);
  ring(table, kNegative, 2);
  table["movie"] = {"film"};
  table["film"] = {"movie"};
  table["story"] = {"plot"};
  table["plot"] = {"story"};
  table["is"] = {"was"};
  table["was"] = {"is"};
  table["the"] = {"a"};
  table["a"] = {"the"};
  return table;
}

PerturbationSpace sst_space(const SynonymTable& table, int dup_budget, int sub_budget) {
  return PerturbationSpace({SpaceItem{make_duplicate(), dup_budget},
                            SpaceItem{make_substitute("SubSyn", table), sub_budget}});
}

SstData make_sst(const SstConfig& config) {
  SstData out;
  out.synonyms = sst_synonyms();
  const PerturbationSpace space = sst_space(out.synonyms, config.dup_budget, config.sub_budget);
  std::mt19937_64 rng(config.seed);
  auto fill = [&](Dataset& data, std::size_t count) {
    while (data.examples.size() < count) {
      Example ex = sentence(rng, config);
      try {
        if (enumerate_space(space, ex.tokens, 100'000).size() > config.max_space) continue;
      } catch (const EnumerationLimit&) {
        continue;
      }
      data.examples.push_back(std::move(ex));
    }
  };
  fill(out.train, config.train);
  fill(out.test, config.test);
  return out;
}

void write_tsv(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Example& e : data.examples) out << e.label << '\t' << join_tokens(e.tokens) << '\n';
}

void write_synonyms(const std::filesystem::path& path, const SynonymTable& table) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [word, alternatives] : table) {
    out << word;
    for (const std::string& a : alternatives) out << '\t' << a;
    out << '\n';
  }
}

}  // namespace recert::synthetic
