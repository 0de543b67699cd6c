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
#include <functional>
#include <random>

#include "gradcheck.hpp"
#include "refseg/autograd.hpp"

namespace refseg::ag {
namespace {

/// Checks d(sum(w .* f(x)))/dx for a random weighting w.
void check_op(const Shape& in_shape, const std::function<Var(const Var&)>& f, std::uint64_t seed = 1,
              double tol = 1e-6) {
  std::mt19937_64 rng(seed);
  Tensor x0 = normal_tensor(in_shape, 1.0, rng);
  const Tensor probe = normal_tensor(f(constant(x0)).shape(), 1.0, rng);
  auto objective = [&](const Tensor& x) {
    const Tensor y = f(constant(x)).value();
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * probe[i];
    return s;
  };
  Var x = leaf(x0, true);
  backward(sum_all(mul(f(x), constant(probe))));
  const Tensor analytic = x.grad();
  Tensor numeric(in_shape);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    Tensor up = x0, down = x0;
    up[i] += 1e-6;
    down[i] -= 1e-6;
    numeric[i] = (objective(up) - objective(down)) / 2e-6;
  }
  EXPECT_LT(testing::relative_error(analytic, numeric), tol);
}

TEST(Autograd, ElementwiseOps) {
  check_op({3, 4}, [](const Var& x) { return scale(add(x, x), 0.5); });
  check_op({3, 4}, [](const Var& x) { return mul(x, x); });
  check_op({3, 4}, [](const Var& x) { return gelu(x); });
  check_op({3, 4}, [](const Var& x) { return relu(add(x, constant(Tensor({3, 4}, 0.1)))); }, 3);
}

TEST(Autograd, MatrixOps) {
  std::mt19937_64 rng(2);
  const Tensor w = normal_tensor({4, 5}, 1.0, rng);
  const Tensor b = normal_tensor({5}, 1.0, rng);
  check_op({3, 4}, [&](const Var& x) { return matmul(x, constant(w)); });
  check_op({3, 4}, [&](const Var& x) { return transpose(x); });
  check_op({3, 4}, [&](const Var& x) { return linear(x, constant(w), constant(b)); });
  check_op({3, 4}, [&](const Var& x) { return softmax_rows(x); });
  check_op({3, 4}, [&](const Var& x) {
    return layer_norm_rows(x, constant(Tensor({4}, 1.3)), constant(Tensor({4}, 0.2)));
  });
  check_op({3, 4}, [&](const Var& x) { return concat_cols({slice_cols(x, 1, 2), slice_rows(transpose(x), 0, 3)}); });
}

TEST(Autograd, ConvAndPooling) {
  std::mt19937_64 rng(4);
  const Tensor w = normal_tensor({3, 2, 3, 3}, 0.5, rng);
  const Tensor b = normal_tensor({3}, 0.5, rng);
  check_op({2, 6, 6}, [&](const Var& x) { return conv2d(x, constant(w), constant(b), {1, 1, 1}); });
  check_op({2, 7, 7}, [&](const Var& x) { return conv2d(x, constant(w), constant(b), {2, 1, 1}); });
  check_op({2, 6, 6}, [&](const Var& x) { return conv2d(x, constant(w), constant(b), {1, 2, 2}); });
  check_op({2, 5, 4}, [&](const Var& x) { return global_avg_pool(x); });
  check_op({2, 3, 3}, [&](const Var& x) { return upsample_bilinear(x, 12, 12); });
  check_op({2, 3, 3}, [&](const Var& x) { return concat_channels({x, scale(x, 2.0)}); });
}

TEST(Autograd, ChannelBroadcasts) {
  std::mt19937_64 rng(5);
  const Tensor map = normal_tensor({3, 4, 4}, 1.0, rng);
  check_op({3}, [&](const Var& v) { return scale_channels(constant(map), v); });
  check_op({3}, [&](const Var& v) { return add_channels(constant(map), v); });
  check_op({3}, [&](const Var& v) { return broadcast_spatial(v, 2, 3); });
  check_op({3, 4, 4}, [&](const Var& x) { return scale_channels(x, constant(Tensor({3}, 0.7))); });
}

TEST(Autograd, Losses) {
  std::mt19937_64 rng(6);
  const Mask target = oracle::random_mask(4, 4, 0.5, rng);
  check_op({2, 4, 4}, [&](const Var& x) { return pixel_cross_entropy(x, target); });
  check_op({3, 6}, [&](const Var& x) { return token_cross_entropy(x, {0, 2}, {5, 1}); });
}

TEST(Autograd, EmbeddingGradientAndRange) {
  check_op({6, 3}, [](const Var& t) { return embedding(t, {1, 4, 1}); });
  try {
    embedding(constant(Tensor({6, 3})), {6});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTokenOutOfRange);
  }
}

TEST(Autograd, PixelCrossEntropyValue) {
  // Equal logits: every pixel costs ln 2.
  const Var l = constant(Tensor({2, 2, 2}, 0.0));
  EXPECT_NEAR(pixel_cross_entropy(l, Mask(2, 2)).value()[0], std::log(2.0), 1e-15);
  try {
    pixel_cross_entropy(l, Mask(3, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Autograd, BilinearHalfPixelTaps) {
  // 2 -> 4: output centres at 0.25, 0.75, 1.25, 1.75 in input pixel units
  // map to source positions -0.25 (clamped), 0.25, 0.75, 1.25 (clamped to 1).
  const auto taps = bilinear_taps(2, 4);
  ASSERT_EQ(taps.size(), 4u);
  const Var x = constant(Tensor({1, 1, 2}, std::vector<double>{0.0, 1.0}));
  const Tensor y = upsample_bilinear(x, 1, 4).value();
  EXPECT_NEAR(y[0], 0.0, 1e-15);
  EXPECT_NEAR(y[1], 0.25, 1e-15);
  EXPECT_NEAR(y[2], 0.75, 1e-15);
  EXPECT_NEAR(y[3], 1.0, 1e-15);
}

TEST(Autograd, ConvOutputSize) {
  EXPECT_EQ(conv_out_size(16, 3, {2, 1, 1}), 8);
  EXPECT_EQ(conv_out_size(8, 3, {1, 3, 3}), 8);
  EXPECT_EQ(conv_out_size(8, 1, {1, 1, 0}), 8);
}

TEST(Autograd, SoftmaxRowsSumToOne) {
  const Tensor p = softmax_rows(constant(Tensor({2, 3}, std::vector<double>{1, 2, 3, -1, 0, 1000}))).value();
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
  EXPECT_NEAR(p[3] + p[4] + p[5], 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(p[5]));
}

}  // namespace
}  // namespace refseg::ag
