// Writes a small synthetic sentiment corpus and its synonym table.
//   make_toy_data <dir> [--train N] [--test N] [--seed S]

#include "synthetic_sst.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic sentiment corpus", "make_toy_data"};
  std::string dir;
  recert::synthetic::SstConfig config;
  app.add_option("dir", dir, "Output directory")->required();
  app.add_option("--train", config.train);
  app.add_option("--test", config.test);
  app.add_option("--seed", config.seed);
  app.add_option("--max-space", config.max_space);
  CLI11_PARSE(app, argc, argv);

  try {
    std::filesystem::create_directories(dir);
    const auto data = recert::synthetic::make_sst(config);
    const std::filesystem::path out(dir);
    recert::synthetic::write_tsv(out / "train.tsv", data.train);
    recert::synthetic::write_tsv(out / "test.tsv", data.test);
    recert::synthetic::write_synonyms(out / "syn.tsv", data.synonyms);
    std::cout << "train=" << data.train.examples.size() << " test=" << data.test.examples.size()
              << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
