#include "recert/error.hpp"
#include "recert/perturbation.hpp"
#include "reference.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace recert;

namespace {

const std::filesystem::path kData = RECERT_DATA_DIR;

std::set<TokenSeq> as_set(const std::vector<PerturbedString>& members) {
  std::set<TokenSeq> out;
  for (const auto& m : members) out.insert(m.tokens);
  return out;
}

PerturbationSpace example_space(int del, int sub) {
  return PerturbationSpace({SpaceItem{make_delete({"to", "the"}), del},
                            SpaceItem{make_substitute("Sub", {{"movie", {"film", "movies"}}}), sub}});
}

}  // namespace

TEST(Tokenize, SplitsOnWhitespaceAndLowercases) {
  EXPECT_EQ(tokenize("  The\tMovie  IS  good\n"), (TokenSeq{"the", "movie", "is", "good"}));
  EXPECT_TRUE(tokenize("   ").empty());
}

TEST(Transformation, ReplaceNeverReturnsIdentity) {
  const Transformation sub = make_substitute("Sub", {{"a", {"a", "b"}}});
  EXPECT_EQ(sub.replace("a"), (std::vector<TokenSeq>{{"b"}}));
  EXPECT_TRUE(sub.replace("z").empty());
  EXPECT_EQ(make_duplicate().replace("x"), (std::vector<TokenSeq>{{"x", "x"}}));
  EXPECT_EQ(make_delete({"to"}).replace("to"), (std::vector<TokenSeq>{{}}));
}

TEST(Transformation, UnknownBuiltinThrows) {
  EXPECT_THROW(builtin("Swap"), UnknownTransformation);
}

TEST(Space, RejectsNegativeBudgetAndDuplicates) {
  EXPECT_THROW(PerturbationSpace({SpaceItem{make_duplicate(), -1}}), Error);
  EXPECT_THROW(PerturbationSpace({SpaceItem{make_duplicate(), 1}, SpaceItem{make_duplicate(), 2}}),
               Error);
}

TEST(Enumerate, ExampleSpaceHasNineMembers) {
  const auto members = enumerate_space(example_space(1, 1), tokenize("to the movie"));
  const std::set<TokenSeq> expect{
      {"to", "the", "movie"}, {"to", "the", "film"}, {"to", "the", "movies"},
      {"the", "movie"},       {"the", "film"},       {"the", "movies"},
      {"to", "movie"},        {"to", "film"},        {"to", "movies"}};
  EXPECT_EQ(members.size(), 9u);
  EXPECT_EQ(as_set(members), expect);
  EXPECT_EQ(members.front().tokens, tokenize("to the movie"));
}

TEST(Enumerate, MappingPointsAtSourcePositions) {
  const auto members = enumerate_space(
      PerturbationSpace({SpaceItem{make_duplicate(), 1}, SpaceItem{make_delete({"a"}), 1}}),
      tokenize("a b c"));
  for (const PerturbedString& z : members) {
    ASSERT_EQ(z.mapping.size(), z.tokens.size());
    const TokenSeq x = tokenize("a b c");
    for (std::size_t i = 0; i < z.tokens.size(); ++i) {
      EXPECT_EQ(z.tokens[i], x[static_cast<std::size_t>(z.mapping[i] - 1)]);
      if (i > 0) EXPECT_LE(z.mapping[i - 1], z.mapping[i]);
    }
  }
}

TEST(Enumerate, ZeroBudgetsGiveTheInputOnly) {
  const auto members = enumerate_space(example_space(0, 0), tokenize("to the movie"));
  ASSERT_EQ(members.size(), 1u);
  EXPECT_EQ(members[0].tokens, tokenize("to the movie"));
}

TEST(Enumerate, EmptyStringsAreExcluded) {
  const auto members =
      enumerate_space(PerturbationSpace({SpaceItem{make_delete({"to"}), 1}}), tokenize("to"));
  ASSERT_EQ(members.size(), 1u);
}

TEST(Enumerate, CapIsEnforced) {
  EXPECT_THROW(enumerate_space(PerturbationSpace({SpaceItem{make_duplicate(), 8}}),
                               tokenize("a b c d e f g h i j k l"), 100),
               EnumerationLimit);
}

TEST(Enumerate, MatchesRecursiveOracleAndIsMonotoneInBudgets) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const reference::TinyCase c = reference::tiny_case(rng);
    const PerturbationSpace space = PerturbationSpace(
        {SpaceItem{make_duplicate(), static_cast<int>(rng() % 3)},
         SpaceItem{make_substitute("SubSyn", c.synonyms), static_cast<int>(rng() % 3)},
         SpaceItem{make_delete({"w0", "w1"}), static_cast<int>(rng() % 2)}});
    const auto members = enumerate_space(space, c.x);
    EXPECT_EQ(as_set(members), reference::perturbation_set(space, c.x));
    EXPECT_EQ(as_set(members).size(), members.size());
    std::vector<int> more = space.budgets();
    more[rng() % more.size()] += 1;
    const auto larger = as_set(enumerate_space(space.with_budgets(more), c.x));
    for (const auto& z : members) EXPECT_TRUE(larger.count(z.tokens)) << join_tokens(z.tokens);
  }
}

TEST(SpaceSpec, ParsesBuiltinsWithResources) {
  const PerturbationSpace s = parse_space_spec("Del(stop.txt):1, Sub(movie.tsv):2,Dup():0", kData);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.items()[0].transformation.name(), "Del");
  EXPECT_EQ(s.budgets(), (std::vector<int>{1, 2, 0}));
  EXPECT_TRUE(s.items()[0].transformation.matches("the"));
  EXPECT_EQ(s.items()[1].transformation.replace("movie"),
            (std::vector<TokenSeq>{{"film"}, {"movies"}}));
  EXPECT_TRUE(parse_space_spec("  ").empty());
}

TEST(SpaceSpec, SyntaxErrorsReportOffsets) {
  try {
    parse_space_spec("Dup():1,,Dup():1", kData);
    FAIL() << "expected SpecSyntaxError";
  } catch (const SpecSyntaxError& e) {
    EXPECT_EQ(e.position(), 8u);
  }
  EXPECT_THROW(parse_space_spec("Dup()", kData), SpecSyntaxError);
  EXPECT_THROW(parse_space_spec("Dup(:1", kData), SpecSyntaxError);
  EXPECT_THROW(parse_space_spec("Dup():x", kData), SpecSyntaxError);
  EXPECT_THROW(parse_space_spec("Dup(a):1", kData), SpecSyntaxError);
  EXPECT_THROW(parse_space_spec("Sub():1", kData), SpecSyntaxError);
  EXPECT_THROW(parse_space_spec("Dup():1,Dup():2", kData), SpecSyntaxError);
  EXPECT_THROW(parse_space_spec("Dup():99999999999", kData), SpecSyntaxError);
}

TEST(SpaceSpec, UnknownNameAndMissingResource) {
  EXPECT_THROW(parse_space_spec("Swap():1", kData), UnknownTransformation);
  EXPECT_THROW(parse_space_spec("SubSyn(no_such_file.tsv):1", kData), ResourceError);
}
