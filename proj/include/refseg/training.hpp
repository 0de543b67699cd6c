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

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "refseg/autograd.hpp"
#include "refseg/error.hpp"
#include "refseg/mask.hpp"
#include "refseg/refnet.hpp"
#include "refseg/tokenizer.hpp"

namespace refseg {

struct TrainSample {
  Tensor image;  // [C,H,W], values in [0,1]
  TokenSeq tokens;
  Mask target;
};

using Gradients = std::map<std::string, Tensor>;
using WeightFilter = std::function<bool(const std::string&)>;

struct LossAndGradients {
  double loss = 0.0;
  Gradients grads;  // only for weights selected as trainable
};

inline WeightFilter all_weights() {
  return [](const std::string&) { return true; };
}

inline WeightFilter task_weights(bool freeze_language) {
  return [freeze_language](const std::string& n) {
    return !(freeze_language && is_language_weight(n)) && n.rfind("language.mlm_head", 0) != 0;
  };
}

inline Gradients collect_gradients(const BoundParams& bound, const WeightFilter& trainable) {
  Gradients g;
  for (const auto& [name, var] : bound.vars())
    if (trainable(name)) g.emplace(name, var.grad());
  return g;
}

/// Mean segmentation cross-entropy over a batch and its gradients.
inline LossAndGradients segmentation_loss_and_gradients(const ModelParams& params,
                                                        std::span<const TrainSample> batch,
                                                        const WeightFilter& trainable) {
  if (batch.empty()) fail(ErrorCode::kEmptyDataset, "empty batch");
  const BoundParams bound(params, trainable);
  std::vector<ag::Var> losses;
  losses.reserve(batch.size());
  for (const auto& s : batch) {
    const ag::Var logits = graph::forward(bound, ag::constant(s.image), s.tokens);
    losses.push_back(ag::pixel_cross_entropy(logits, s.target));
  }
  const ag::Var loss = ag::mean_scalars(losses);
  ag::backward(loss);
  return {loss.value()[0], collect_gradients(bound, trainable)};
}

/// Plain SGD with optional heavy-ball momentum.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void step(ModelParams& params, const Gradients& grads) {
    for (const auto& [name, g] : grads) {
      Tensor& w = params.weights.at(name);
      if (momentum_ == 0.0) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
        continue;
      }
      auto [it, fresh] = velocity_.try_emplace(name, Tensor(w.shape));
      Tensor& v = it->second;
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i];
        w[i] -= lr_ * v[i];
      }
    }
  }

 private:
  double lr_;
  double momentum_;
  std::map<std::string, Tensor> velocity_;
};

struct TrainSchedule {
  bool freeze_language = false;
  int steps = 100;
  double lr = 0.02;
  double momentum = 0.9;
  int batch = 4;
  std::uint64_t seed = 0;
};

struct StepLog {
  int step = 0;
  double loss = 0.0;
};

/// Seeded epoch-wise shuffling; batches wrap across epoch boundaries.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, int batch, std::uint64_t seed)
      : n_(n), batch_(static_cast<std::size_t>(std::max(1, batch))), rng_(seed) {
    reshuffle();
  }

  std::vector<std::size_t> next() {
    std::vector<std::size_t> out;
    const std::size_t want = std::min(batch_, n_);
    while (out.size() < want) {
      if (cursor_ == order_.size()) reshuffle();
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    cursor_ = 0;
  }

  std::size_t n_;
  std::size_t batch_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Gradient descent on the segmentation loss. With freeze_language the
/// language weights are never touched.
inline ModelParams train(ModelParams params, std::span<const TrainSample> dataset,
                         const TrainSchedule& schedule,
                         const std::function<void(const StepLog&)>& on_step = {}) {
  if (dataset.empty()) fail(ErrorCode::kEmptyDataset, "training set is empty");
  if (schedule.steps <= 0) return params;
  SgdMomentum opt(schedule.lr, schedule.momentum);
  BatchSampler sampler(dataset.size(), schedule.batch, schedule.seed);
  const WeightFilter trainable = task_weights(schedule.freeze_language);
  std::vector<TrainSample> batch;
  for (int step = 0; step < schedule.steps; ++step) {
    batch.clear();
    const auto idx = sampler.next();
    for (std::size_t i : idx) batch.push_back(dataset[i]);
    auto [loss, grads] = segmentation_loss_and_gradients(params, batch, trainable);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "loss " << loss << " at step " << step << " on samples";
      for (std::size_t i : idx) msg << ' ' << i;
      msg << " (lr " << schedule.lr << ")";
      fail(ErrorCode::kNonFiniteLoss, msg.str());
    }
    opt.step(params, grads);
    if (on_step) on_step({step, loss});
  }
  return params;
}

inline double mean_train_iou(const ModelParams& params, std::span<const TrainSample> dataset) {
  if (dataset.empty()) fail(ErrorCode::kEmptyDataset, "no samples");
  double sum = 0.0;
  for (const auto& s : dataset) sum += iou(predict(params, s.image, s.tokens), s.target);
  return sum / static_cast<double>(dataset.size());
}

// ------------------------------------------------------------ masked LM

struct MaskedPhrase {
  TokenSeq input;              // with [MASK] substituted at `positions`
  std::vector<int> positions;  // masked positions
  std::vector<int> targets;    // original ids at those positions
};

/// Masks ceil(fraction * eligible) word positions chosen uniformly at random.
/// The summary and separator tokens are never eligible.
inline MaskedPhrase mask_tokens(const TokenSeq& tokens, double fraction, std::mt19937_64& rng) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "mask_fraction must lie in (0,1)");
  }
  std::vector<int> eligible;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    const int id = tokens.ids[i];
    if (id != special_tokens::kCls && id != special_tokens::kSep && id != special_tokens::kPad)
      eligible.push_back(i);
  }
  const auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(eligible.size())));
  if (count == 0) fail(ErrorCode::kNoMaskableTokens, "phrase has no maskable tokens");
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(count);
  std::sort(eligible.begin(), eligible.end());
  MaskedPhrase out{tokens, eligible, {}};
  for (int pos : eligible) {
    out.targets.push_back(tokens.ids[pos]);
    out.input.ids[pos] = special_tokens::kMask;
  }
  return out;
}

/// Cross-entropy over masked positions only, averaged over all masked tokens.
inline ag::Var mlm_loss_graph(const BoundParams& w, std::span<const MaskedPhrase> batch) {
  if (batch.empty()) fail(ErrorCode::kEmptyDataset, "empty MLM batch");
  std::vector<ag::Var> terms;
  std::size_t total = 0;
  for (const auto& mp : batch) {
    const ag::Var logits = graph::linear(w, "language.mlm_head", graph::token_states(w, mp.input));
    const ag::Var ce = ag::token_cross_entropy(logits, mp.positions, mp.targets);
    terms.push_back(ag::scale(ce, static_cast<double>(mp.positions.size())));
    total += mp.positions.size();
  }
  ag::Var sum = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) sum = ag::add(sum, terms[i]);
  return ag::scale(sum, 1.0 / static_cast<double>(total));
}

inline double mlm_loss(const ModelParams& params, std::span<const MaskedPhrase> batch) {
  return mlm_loss_graph(BoundParams(params), batch).value()[0];
}

struct MlmOptions {
  double mask_fraction = 0.15;
  double lr = 0.05;
  double momentum = 0.0;
};

/// One gradient step on the language weights. Returns the loss before the update.
inline double mlm_step(ModelParams& params, std::span<const TokenSeq> batch, const MlmOptions& opt,
                       std::mt19937_64& rng) {
  std::vector<MaskedPhrase> masked;
  masked.reserve(batch.size());
  for (const auto& t : batch) masked.push_back(mask_tokens(t, opt.mask_fraction, rng));
  const BoundParams bound(params, is_language_weight);
  const ag::Var loss = mlm_loss_graph(bound, masked);
  ag::backward(loss);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) fail(ErrorCode::kNonFiniteLoss, "MLM loss is not finite");
  SgdMomentum sgd(opt.lr, 0.0);
  sgd.step(params, collect_gradients(bound, is_language_weight));
  return value;
}

/// Stand-alone MLM stage: `steps` batches drawn from the corpus in seeded order.
inline std::vector<double> mlm_pretrain(ModelParams& params, std::span<const TokenSeq> corpus,
                                        int steps, int batch, const MlmOptions& opt,
                                        std::uint64_t seed) {
  if (corpus.empty()) fail(ErrorCode::kEmptyDataset, "MLM corpus is empty");
  std::vector<double> losses;
  std::mt19937_64 rng(seed);
  BatchSampler sampler(corpus.size(), batch, seed ^ 0x9e3779b97f4a7c15ULL);
  SgdMomentum sgd(opt.lr, opt.momentum);
  for (int s = 0; s < steps; ++s) {
    std::vector<MaskedPhrase> masked;
    for (std::size_t i : sampler.next()) masked.push_back(mask_tokens(corpus[i], opt.mask_fraction, rng));
    const BoundParams bound(params, is_language_weight);
    const ag::Var loss = mlm_loss_graph(bound, masked);
    ag::backward(loss);
    losses.push_back(loss.value()[0]);
    if (!std::isfinite(losses.back())) fail(ErrorCode::kNonFiniteLoss, "MLM loss is not finite");
    sgd.step(params, collect_gradients(bound, is_language_weight));
  }
  return losses;
}

}  // namespace refseg
