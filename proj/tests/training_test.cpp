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

#include <cmath>
#include <random>
#include <set>

#include "gradcheck.hpp"
#include "refseg/synthetic.hpp"
#include "refseg/training.hpp"

namespace refseg {
namespace {

using testing::tiny_config;

std::vector<TrainSample> tiny_samples(const ModelConfig& c, int n) {
  std::mt19937_64 rng(99);
  std::vector<TrainSample> out;
  for (int i = 0; i < n; ++i) out.push_back(testing::random_sample(c, 16, rng));
  return out;
}

TEST(BatchSampler, SeededAndCoversEpoch) {
  BatchSampler a(10, 4, 1), b(10, 4, 1);
  std::multiset<std::size_t> seen;
  for (int i = 0; i < 5; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_EQ(x.size(), 4u);
    seen.insert(x.begin(), x.end());
  }
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen.count(i), 2u);
  EXPECT_EQ(BatchSampler(2, 4, 0).next().size(), 2u);
}

TEST(Train, ZeroStepsReturnsInitialization) {
  const ModelConfig c = tiny_config();
  const ModelParams p = init_params(c, 1);
  TrainSchedule s;
  s.steps = 0;
  EXPECT_EQ(train(p, tiny_samples(c, 2), s).weights, p.weights);
}

TEST(Train, EmptyDataset) {
  try {
    train(init_params(tiny_config(), 1), std::vector<TrainSample>{}, TrainSchedule{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyDataset);
  }
}

TEST(Train, SameSeedIsBitIdentical) {
  const ModelConfig c = tiny_config();
  const auto data = tiny_samples(c, 3);
  TrainSchedule s;
  s.steps = 5;
  s.batch = 2;
  s.seed = 4;
  const auto a = train(init_params(c, 2), data, s);
  const auto b = train(init_params(c, 2), data, s);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_NE(a.weights, init_params(c, 2).weights);
}

TEST(Train, FreezeLanguageLeavesLanguageWeights) {
  const ModelConfig c = tiny_config();
  const ModelParams p = init_params(c, 3);
  TrainSchedule s;
  s.steps = 3;
  s.freeze_language = true;
  const auto q = train(p, tiny_samples(c, 2), s);
  for (const auto& [name, t] : p.weights) {
    if (is_language_weight(name)) EXPECT_EQ(q.weights.at(name), t) << name;
  }
  EXPECT_NE(q.weights.at("decoder.weight"), p.weights.at("decoder.weight"));
}

TEST(Train, MlmHeadUntouchedBySegmentation) {
  const ModelConfig c = tiny_config();
  const ModelParams p = init_params(c, 3);
  TrainSchedule s;
  s.steps = 2;
  const auto q = train(p, tiny_samples(c, 2), s);
  EXPECT_EQ(q.weights.at("language.mlm_head.weight"), p.weights.at("language.mlm_head.weight"));
  EXPECT_NE(q.weights.at("language.tok_embed"), p.weights.at("language.tok_embed"));
}

TEST(Train, NonFiniteLossIsReported) {
  const ModelConfig c = tiny_config();
  ModelParams p = init_params(c, 3);
  p.weights.at("decoder.bias")[0] = std::nan("");
  TrainSchedule s;
  s.steps = 1;
  try {
    train(p, tiny_samples(c, 2), s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteLoss);
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
  }
}

TEST(Train, LossFallsOnSyntheticScenes) {
  const ModelConfig c = ModelConfig::toy();
  const Vocabulary v = Vocabulary::build(synthetic::overfit_phrases(), c.vocab_size);
  const auto data = synthetic::overfit_samples(v, c.max_tokens);
  std::vector<double> losses;
  TrainSchedule s;
  s.steps = 40;
  train(init_params(c, 0), data, s, [&](const StepLog& l) { losses.push_back(l.loss); });
  ASSERT_EQ(losses.size(), 40u);
  EXPECT_LT(losses.back(), losses.front());
}

TEST(MaskTokens, CountsAndErrors) {
  std::mt19937_64 rng(1);
  const TokenSeq t{{2, 5, 6, 7, 8, 9, 10, 3}};  // 6 eligible
  const auto m = mask_tokens(t, 0.15, rng);
  EXPECT_EQ(m.positions.size(), 1u);  // ceil(0.9)
  EXPECT_EQ(m.input.ids[m.positions[0]], special_tokens::kMask);
  EXPECT_EQ(m.targets[0], t.ids[m.positions[0]]);
  EXPECT_EQ(mask_tokens(t, 0.5, rng).positions.size(), 3u);
  for (int p : mask_tokens(t, 0.99, rng).positions) {
    EXPECT_GT(p, 0);
    EXPECT_LT(p, 7);
  }
  try {
    mask_tokens(TokenSeq{{2, 3}}, 0.15, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoMaskableTokens);
  }
  EXPECT_THROW(mask_tokens(t, 0.0, rng), Error);
  EXPECT_THROW(mask_tokens(t, 1.0, rng), Error);
}

TEST(Mlm, InitialLossNearUniform) {
  ModelConfig c = ModelConfig::toy();
  c.vocab_size = 40;
  const ModelParams p = init_params(c, 0);
  std::mt19937_64 rng(0);
  std::vector<MaskedPhrase> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(mask_tokens(TokenSeq{{2, 5 + i, 12, 20 + i, 3}}, 0.5, rng));
  EXPECT_NEAR(mlm_loss(p, batch) / std::log(40.0), 1.0, 0.02);
}

TEST(Mlm, StepOnlyTouchesLanguageWeights) {
  const ModelConfig c = tiny_config();
  ModelParams p = init_params(c, 0);
  const ModelParams before = p;
  std::mt19937_64 rng(0);
  const std::vector<TokenSeq> batch{{{2, 5, 6, 7, 3}}};
  mlm_step(p, batch, MlmOptions{}, rng);
  for (const auto& [name, t] : before.weights) {
    if (!is_language_weight(name)) EXPECT_EQ(p.weights.at(name), t) << name;
  }
  EXPECT_NE(p.weights.at("language.mlm_head.weight"), before.weights.at("language.mlm_head.weight"));
}

TEST(Mlm, PretrainIsSeeded) {
  const ModelConfig c = tiny_config();
  const std::vector<TokenSeq> corpus{{{2, 5, 6, 7, 3}}, {{2, 8, 9, 3}}};
  ModelParams a = init_params(c, 0), b = init_params(c, 0);
  EXPECT_EQ(mlm_pretrain(a, corpus, 4, 2, MlmOptions{}, 3), mlm_pretrain(b, corpus, 4, 2, MlmOptions{}, 3));
  EXPECT_EQ(a.weights, b.weights);
}

}  // namespace
}  // namespace refseg
