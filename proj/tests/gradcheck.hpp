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

// Central finite differences against the tape's gradients.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "refseg/refnet.hpp"
#include "refseg/training.hpp"

namespace refseg::testing {

/// Small enough for thousands of forward passes per second.
inline ModelConfig tiny_config() {
  ModelConfig c = ModelConfig::toy();
  c.backbone_width = {4, 8};
  c.output_stride = 4;
  c.aspp_rates = {1, 2};
  c.fusion_dim = 8;
  c.lang_dim = 8;
  c.lang_heads = 2;
  c.ffn_dim = 16;
  c.vocab_size = 16;
  c.max_tokens = 8;
  return c;
}

inline TrainSample random_sample(const ModelConfig& c, int size, std::mt19937_64& rng) {
  TrainSample s{normal_tensor({c.image_channels, size, size}, 0.5, rng), {}, oracle::random_blobs(size, size, rng)};
  std::uniform_int_distribution<int> tok(special_tokens::kCount, c.vocab_size - 1);
  s.tokens.ids.push_back(special_tokens::kCls);
  for (int i = 0; i < 4; ++i) s.tokens.ids.push_back(tok(rng));
  s.tokens.ids.push_back(special_tokens::kSep);
  return s;
}

/// ||a - n|| / max(||a||, ||n||), 0 when both vanish.
inline double relative_error(const Tensor& analytic, const Tensor& numeric) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale < 1e-12 ? 0.0 : std::sqrt(diff) / scale;
}

inline Tensor numeric_gradient(ModelParams params, const std::vector<TrainSample>& batch, const std::string& name,
                               double eps = 1e-5) {
  Tensor g(params.weights.at(name).shape);
  auto loss = [&] {
    double s = 0;
    for (const auto& b : batch) s += segmentation_loss(forward(params, b.image, b.tokens), b.target);
    return s / static_cast<double>(batch.size());
  };
  for (std::size_t i = 0; i < g.size(); ++i) {
    double& w = params.weights.at(name)[i];
    const double orig = w;
    w = orig + eps;
    const double up = loss();
    w = orig - eps;
    const double down = loss();
    w = orig;
    g[i] = (up - down) / (2 * eps);
  }
  return g;
}

/// Worst per-tensor relative error over `names`.
inline double gradient_check(const ModelParams& params, const std::vector<TrainSample>& batch,
                             const std::vector<std::string>& names) {
  const auto trainable = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  const auto analytic = segmentation_loss_and_gradients(params, batch, trainable);
  double worst = 0;
  for (const auto& n : names) worst = std::max(worst, relative_error(analytic.grads.at(n), numeric_gradient(params, batch, n)));
  return worst;
}

inline std::vector<std::string> fusion_and_decoder_weights(const ModelConfig& c) {
  std::vector<std::string> out;
  for (const auto& [name, shape] : expected_shapes(c))
    if (name.rfind("fusion.", 0) == 0 || name.rfind("decoder", 0) == 0) out.push_back(name);
  return out;
}

}  // namespace refseg::testing
