#include "recert/cli.hpp"
#include "synthetic_sst.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace recert;

namespace {

const std::string kData = RECERT_DATA_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line.find(' ') == std::string::npos) {
      out[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  return out;
}

class CliWorkspace : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() / "recert_cli_test";
    std::filesystem::create_directories(dir_);
    synthetic::SstConfig c;
    c.train = 120;
    c.test = 30;
    const auto data = synthetic::make_sst(c);
    synthetic::write_tsv(dir_ / "train.tsv", data.train);
    synthetic::write_tsv(dir_ / "test.tsv", data.test);
    synthetic::write_synonyms(dir_ / "syn.tsv", data.synonyms);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const char* name) const { return (dir_ / name).string(); }

  std::filesystem::path dir_;
};

}  // namespace

TEST(Cli, EnumeratePrintsTheNineExampleStrings) {
  const Result r = invoke({"enumerate", "--space", "Del(stop.txt):1,Sub(movie.tsv):1", "--text",
                           "to the movie", "--resource-dir", kData});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("to the film\n"), std::string::npos);
  EXPECT_NE(r.out.find("the movies\n"), std::string::npos);
  EXPECT_EQ(key_values(r.out)["count"], "9");
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({"enumerate", "--text", "a"}).code, 2);
  EXPECT_EQ(invoke({"enumerate", "--space", "Dup():", "--text", "a"}).code, 2);
  EXPECT_EQ(invoke({"enumerate", "--space", "Swap():1", "--text", "a"}).code, 2);
}

TEST(Cli, MissingFilesExitWithThree) {
  EXPECT_EQ(invoke({"enumerate", "--space", "Del(missing.txt):1", "--text", "a"}).code, 3);
  EXPECT_EQ(invoke({"certify", "--model", "/nonexistent.model", "--data", "/nonexistent.tsv",
                    "--space", "Dup():1"})
                .code,
            3);
}

TEST(Cli, SelftestPasses) {
  const Result r = invoke({"selftest"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("selftest=pass"), std::string::npos);
}

TEST_F(CliWorkspace, TrainCertifyEvalRoundTrip) {
  const Result t = invoke({"train", "--data", path("train.tsv"), "--space",
                           "Dup():1,SubSyn(syn.tsv):1", "--resource-dir", dir_.string(), "--mode",
                           "normal", "--out", path("m.model"), "--epochs", "3", "--seed", "5"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("epoch=2 "), std::string::npos);

  const Result zero = invoke({"certify", "--model", path("m.model"), "--data", path("test.tsv"),
                              "--space", "Dup():0,SubSyn(syn.tsv):0", "--resource-dir",
                              dir_.string()});
  ASSERT_EQ(zero.code, 0) << zero.err;
  const Result normal = invoke({"eval", "--model", path("m.model"), "--data", path("test.tsv"),
                                "--space", "Dup():0", "--metric", "normal"});
  ASSERT_EQ(normal.code, 0) << normal.err;
  EXPECT_EQ(key_values(zero.out)["certified_acc"], key_values(normal.out)["normal_acc"]);

  const Result limited = invoke({"certify", "--model", path("m.model"), "--data",
                                 path("test.tsv"), "--space", "Dup():1", "--limit", "5"});
  EXPECT_EQ(key_values(limited.out)["total"], "5");

  const Result all = invoke({"eval", "--model", path("m.model"), "--data", path("test.tsv"),
                             "--space", "Dup():1,SubSyn(syn.tsv):1", "--resource-dir",
                             dir_.string(), "--metric", "normal,certified,exhaustive",
                             "--summary", path("summary.txt")});
  ASSERT_EQ(all.code, 0) << all.err;
  auto kv = key_values(all.out);
  EXPECT_LE(std::stod(kv["certified_acc"]), std::stod(kv["exhaustive_acc"]));
  EXPECT_LE(std::stod(kv["exhaustive_acc"]), std::stod(kv["normal_acc"]));
  EXPECT_TRUE(std::filesystem::exists(path("summary.txt")));
}

TEST_F(CliWorkspace, TrainingIsDeterministicGivenSeed) {
  for (const char* out : {"a.model", "b.model"}) {
    ASSERT_EQ(invoke({"train", "--data", path("train.tsv"), "--space", "Dup():1", "--mode",
                      "augment", "--out", path(out), "--epochs", "2", "--seed", "9"})
                  .code,
              0);
  }
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  EXPECT_EQ(slurp(path("a.model")), slurp(path("b.model")));
}
