// Copyright 2026 The refseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "refseg/taxonomy.hpp"

namespace refseg {
namespace {

AnnotationRecord rec(const std::string& annotator, const std::string& instance, const std::string& phrase,
                     std::initializer_list<SemanticCategory> cats) {
  AnnotationRecord r;
  r.annotator_id = annotator;
  r.instance_id = instance;
  r.phrase_id = phrase;
  for (auto c : cats) r.categories[index_of(c)] = true;
  r.timestamp = "2026-01-01T00:00:00Z";
  return r;
}

using SC = SemanticCategory;

TEST(Record, JsonRoundTrip) {
  AnnotationRecord r = rec("a1", "v:1", "p0", {SC::kAppearance, SC::kMotion});
  r.difficulty = Difficulty::kNonTrivial;
  r.correctness = Correctness::kWrongObject;
  r.redundancy = Redundancy::kRedundant;
  const std::string line = record_to_line(r);
  EXPECT_EQ(record_from_json(nlohmann::json::parse(line)), r);
  std::istringstream in(line + "\n" + line);
  EXPECT_EQ(read_records(in).size(), 2u);
}

TEST(Record, FieldLevelProblems) {
  auto j = nlohmann::json::parse(record_to_line(rec("a1", "v:1", "p0", {})));
  j["categories"]["colour"] = true;
  j["difficulty"] = "easy";
  j.erase("phrase_id");
  const auto errs = record_problems(j);
  auto has = [&](const std::string& prefix) {
    return std::any_of(errs.begin(), errs.end(), [&](const std::string& e) { return e.rfind(prefix, 0) == 0; });
  };
  EXPECT_TRUE(has("categories.colour"));
  EXPECT_TRUE(has("difficulty"));
  EXPECT_TRUE(has("phrase_id"));
  EXPECT_THROW(record_from_json(j), Error);
}

TEST(Record, ParseErrorNamesLine) {
  std::istringstream in(record_to_line(rec("a", "v:1", "p", {})) + "{not json}\n");
  try {
    read_records(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(AutoDifficulty, ClassMultiplicity) {
  const VideoCatalog cat{{"solo", {{"1", "dog"}}},
                         {"mixed", {{"1", "dog"}, {"2", "person"}}},
                         {"twins", {{"1", "person"}, {"2", "person"}, {"3", "car"}}}};
  EXPECT_EQ(auto_difficulty("solo", "1", cat), Difficulty::kTrivial);
  EXPECT_EQ(auto_difficulty("mixed", "2", cat), Difficulty::kTrivial);
  EXPECT_EQ(auto_difficulty("twins", "1", cat), Difficulty::kNonTrivial);
  EXPECT_EQ(auto_difficulty("twins", "3", cat), Difficulty::kTrivial);
  try {
    auto_difficulty("twins", "9", cat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownInstance);
  }
}

TEST(MajorityVote, TwoOfThree) {
  const std::vector<AnnotationRecord> r{rec("a", "v:1", "p", {SC::kAppearance, SC::kMotion}),
                                        rec("b", "v:1", "p", {SC::kAppearance}),
                                        rec("c", "v:1", "p", {SC::kMotion, SC::kStatic})};
  const CategorySet s = majority_vote(r);
  EXPECT_TRUE(s.has(SC::kAppearance));
  EXPECT_TRUE(s.has(SC::kMotion));
  EXPECT_FALSE(s.has(SC::kStatic));
  EXPECT_EQ(s.vote_counts[index_of(SC::kStatic)], 1);
  EXPECT_EQ(s.n_annotators, 3);
}

TEST(MajorityVote, MatchesThresholdOracle) {
  std::mt19937_64 rng(8);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 300; ++i) {
    std::vector<AnnotationRecord> r;
    std::array<int, kNumCategories> yes{};
    for (const char* a : {"a", "b", "c"}) {
      AnnotationRecord x = rec(a, "v:1", "p", {});
      for (std::size_t k = 0; k < kNumCategories; ++k) {
        x.categories[k] = coin(rng);
        yes[k] += x.categories[k];
      }
      r.push_back(x);
    }
    const auto s = majority_vote(r);
    for (std::size_t k = 0; k < kNumCategories; ++k) EXPECT_EQ(s.flags[k], yes[k] >= 2);
  }
}

TEST(MajorityVote, Errors) {
  const auto a = rec("a", "v:1", "p", {});
  try {
    majority_vote(std::vector<AnnotationRecord>{a, rec("b", "v:2", "p", {})});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMixedInstance);
  }
  try {
    majority_vote(std::vector<AnnotationRecord>{a, a});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDuplicateAnnotator);
  }
}

TEST(Aggregate, SingleAnnotatorItemsTakenAsIs) {
  const std::vector<AnnotationRecord> r{rec("a", "v:1", "p", {SC::kLocation}),
                                        rec("a", "v:2", "p", {}), rec("b", "v:2", "p", {SC::kMotion}),
                                        rec("c", "v:2", "p", {SC::kMotion})};
  const auto items = aggregate(r);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_TRUE(items[0].categories.has(SC::kLocation));
  EXPECT_EQ(items[0].categories.n_annotators, 1);
  EXPECT_TRUE(items[1].categories.has(SC::kMotion));
}

TEST(FleissKappa, KnownValues) {
  // yes-counts (3,0,2,1) over 3 raters
  const std::vector<std::vector<bool>> m{{1, 1, 1}, {0, 0, 0}, {1, 1, 0}, {1, 0, 0}};
  EXPECT_NEAR(*fleiss_kappa(m), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(*fleiss_kappa(m), oracle::fleiss_from_yes_counts({3, 0, 2, 1}, 3), 1e-12);

  const std::vector<std::vector<bool>> perfect{{1, 1, 1}, {0, 0, 0}, {1, 1, 1}};
  EXPECT_DOUBLE_EQ(*fleiss_kappa(perfect), 1.0);
  EXPECT_DOUBLE_EQ(*fleiss_kappa(perfect, KappaVariant::kDaviesFleiss), 1.0);

  const std::vector<std::vector<bool>> constant{{1, 1}, {1, 1}};
  EXPECT_FALSE(fleiss_kappa(constant).has_value());
}

TEST(FleissKappa, RelabelInvariant) {
  std::mt19937_64 rng(12);
  std::bernoulli_distribution coin(0.4);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::vector<bool>> m(10, std::vector<bool>(3)), flipped = m;
    for (std::size_t i = 0; i < m.size(); ++i)
      for (int r = 0; r < 3; ++r) {
        m[i][r] = coin(rng);
        flipped[i][r] = !m[i][r];
      }
    for (auto v : {KappaVariant::kFleiss, KappaVariant::kDaviesFleiss}) {
      const auto a = fleiss_kappa(m, v), b = fleiss_kappa(flipped, v);
      ASSERT_EQ(a.has_value(), b.has_value());
      if (a) EXPECT_NEAR(*a, *b, 1e-12);
    }
  }
}

TEST(FleissKappa, InputErrors) {
  try {
    fleiss_kappa({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyInput);
  }
  try {
    fleiss_kappa({{1, 0}, {1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRaggedMatrix);
  }
}

TEST(CategoryKappas, PerCategory) {
  std::vector<AnnotationRecord> r;
  for (int i = 0; i < 4; ++i)
    for (const char* a : {"a", "b", "c"}) r.push_back(rec(a, "v:" + std::to_string(i), "p", i % 2 ? std::initializer_list<SC>{SC::kMotion} : std::initializer_list<SC>{}));
  const auto k = category_kappas(r);
  EXPECT_DOUBLE_EQ(*k[index_of(SC::kMotion)].kappa, 1.0);
  EXPECT_FALSE(k[index_of(SC::kAppearance)].kappa.has_value());
  EXPECT_EQ(k[index_of(SC::kMotion)].items, 4u);
}

TEST(Distribution, ProportionsSum) {
  std::vector<AnnotationRecord> r{rec("a", "v:1", "p", {SC::kAppearance}), rec("a", "v:2", "p", {}),
                                  rec("a", "v:3", "p", {}), rec("a", "v:4", "p", {})};
  r[1].difficulty = Difficulty::kNonTrivial;
  r[2].correctness = Correctness::kNoRe;
  r[3].correctness = Correctness::kWrongObject;
  r[3].redundancy = Redundancy::kRedundant;
  const auto d = distribution(aggregate(r));
  double total = 0;
  for (const auto& [k, v] : d.breakdown) total += v;
  EXPECT_DOUBLE_EQ(total, 1.0);
  EXPECT_DOUBLE_EQ(d.breakdown.at("trivial"), 0.25);
  EXPECT_DOUBLE_EQ(d.valid_re + d.no_re + d.wrong_object, 1.0);
  EXPECT_DOUBLE_EQ(d.category[index_of(SC::kAppearance)], 0.25);
  EXPECT_DOUBLE_EQ(d.redundancy_ratio, 0.25);
  EXPECT_THROW(distribution(std::vector<VotedItem>{}), Error);
}

std::map<PhraseKey, CategorySet> voted_for(const std::map<std::string, std::initializer_list<SC>>& phrases) {
  std::vector<AnnotationRecord> r;
  for (const auto& [pid, cats] : phrases) r.push_back(rec("a", "v:1", pid, cats));
  return voted_category_sets(r);
}

TEST(ValidatePair, ValidAndInvalid) {
  const auto voted = voted_for({{"base", {SC::kCategory, SC::kAppearance}},
                                {"minus_app", {SC::kCategory}},
                                {"plus_loc", {SC::kCategory, SC::kAppearance, SC::kLocation}},
                                {"two", {SC::kCategory, SC::kMotion}},
                                {"same", {SC::kCategory, SC::kAppearance}},
                                {"nocat", {SC::kAppearance}}});
  EXPECT_TRUE(validate_pair({"v:1", "base", "minus_app", SC::kAppearance, false}, voted).ok());
  EXPECT_TRUE(validate_pair({"v:1", "base", "plus_loc", SC::kLocation, true}, voted).ok());
  EXPECT_TRUE(validate_pair({"v:1", "base", "two", SC::kAppearance, false}, voted)
                  .has(PairViolationReason::kMultipleDifferences));
  EXPECT_TRUE(validate_pair({"v:1", "base", "same", SC::kAppearance, false}, voted)
                  .has(PairViolationReason::kNoDifference));
  EXPECT_TRUE(validate_pair({"v:1", "base", "minus_app", SC::kLocation, false}, voted)
                  .has(PairViolationReason::kWrongCategoryToggled));
  EXPECT_TRUE(validate_pair({"v:1", "base", "minus_app", SC::kAppearance, true}, voted)
                  .has(PairViolationReason::kPresenceMismatch));
  const auto forbidden = validate_pair({"v:1", "base", "nocat", SC::kCategory, false}, voted);
  EXPECT_TRUE(forbidden.has(PairViolationReason::kForbiddenToggle));
  try {
    validate_pair({"v:1", "base", "ghost", SC::kAppearance, false}, voted);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingCategorySet);
  }
}

TEST(PhraseVariant, Modes) {
  const PhraseMeta m{"dog", "running", "the brown dog running left"};
  EXPECT_EQ(phrase_variant(m, PhraseMode::kGeneric), "thing");
  EXPECT_EQ(phrase_variant(m, PhraseMode::kActor), "dog");
  EXPECT_EQ(phrase_variant(m, PhraseMode::kAction), "running");
  EXPECT_EQ(phrase_variant(m, PhraseMode::kActorAction), "dog running");
  EXPECT_EQ(phrase_variant(m, PhraseMode::kFull), m.full_phrase);
  try {
    phrase_variant({"", "running", ""}, PhraseMode::kActor);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingField);
  }
  EXPECT_EQ(display_name(PhraseMode::kActorAction), "Actor + Action");
  for (auto mode : kAllPhraseModes) EXPECT_EQ(phrase_mode_from_string(to_string(mode)), mode);
}

TEST(CategoryGroups, Labels) {
  CategorySet s;
  s.flags[index_of(SC::kAppearance)] = true;
  s.flags[index_of(SC::kStatic)] = true;
  EXPECT_EQ(category_group_labels(s), (std::vector<std::string>{"+App", "-Loc", "-Motion", "+Static"}));
}

}  // namespace
}  // namespace refseg
