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

#include "oracles.hpp"
#include "refseg/mask.hpp"

namespace refseg {
namespace {

using oracle::from_rows;

TEST(Mask, RejectsNonPositiveDimensions) {
  EXPECT_THROW(Mask(0, 3), Error);
  EXPECT_THROW(Mask(3, -1), Error);
}

TEST(Rle, EncodesCanonicalRuns) {
  EXPECT_EQ(encode_rle(Mask(2, 2)).counts, (std::vector<std::uint64_t>{4}));
  EXPECT_EQ(encode_rle(Mask(2, 2, true)).counts, (std::vector<std::uint64_t>{0, 4}));
  EXPECT_EQ(encode_rle(from_rows({".#", "#."})).counts, (std::vector<std::uint64_t>{1, 2, 1}));
}

TEST(Rle, DecodesKnownRuns) {
  EXPECT_EQ(decode_rle({2, 2, {4}}), Mask(2, 2));
  EXPECT_EQ(decode_rle({2, 2, {0, 4}}), Mask(2, 2, true));
  EXPECT_EQ(decode_rle({2, 2, {1, 2, 1}}), from_rows({".#", "#."}));
}

TEST(Rle, RejectsBadCounts) {
  try {
    decode_rle({2, 2, {1, 2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCountMismatch);
  }
  EXPECT_THROW(decode_rle({2, 2, {1, 0, 3}}), Error);
}

TEST(Rle, RoundTripsRandomMasks) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    std::uniform_int_distribution<int> dim(1, 12);
    const Mask m = oracle::random_mask(dim(rng), dim(rng), i % 5 / 4.0, rng);
    const Rle r = encode_rle(m);
    EXPECT_EQ(decode_rle(r), m);
    for (std::size_t k = 1; k < r.counts.size(); ++k) EXPECT_GT(r.counts[k], 0u);
  }
}

TEST(Rle, JsonFormat) {
  const auto j = rle_to_json(encode_rle(from_rows({".#", "#."})));
  EXPECT_EQ(j.dump(), R"({"size":[2,2],"counts":[1,2,1]})");
  EXPECT_EQ(decode_rle(rle_from_json(j)), from_rows({".#", "#."}));
}

TEST(Iou, KnownValues) {
  const Mask a = from_rows({"##", ".."});
  const Mask b = from_rows({".#", ".#"});
  EXPECT_DOUBLE_EQ(iou(a, a), 1.0);
  EXPECT_DOUBLE_EQ(iou(a, from_rows({"..", "##"})), 0.0);
  EXPECT_DOUBLE_EQ(iou(a, b), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(Mask(3, 3), Mask(3, 3)), 1.0);
  EXPECT_DOUBLE_EQ(iou(Mask(3, 3), Mask(3, 3, true)), 0.0);
}

TEST(Iou, DimensionMismatch) {
  try {
    iou(Mask(2, 2), Mask(2, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(Iou, SymmetricAndMatchesCounting) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Mask a = oracle::random_mask(9, 7, 0.4, rng), b = oracle::random_mask(9, 7, 0.4, rng);
    EXPECT_EQ(iou(a, b), iou(b, a));
    EXPECT_EQ(iou(a, b), oracle::iou(a, b));
  }
}

TEST(Boundary, KnownShapes) {
  EXPECT_TRUE(boundary(Mask(4, 4)).empty());
  Mask dot(5, 5);
  dot.set(2, 2);
  EXPECT_EQ(boundary(dot), dot);
  const Mask b = boundary(Mask(4, 4, true));
  EXPECT_EQ(b.count(), 12u);
  EXPECT_FALSE(b.at(1, 1));
  EXPECT_FALSE(b.at(2, 2));
}

TEST(Boundary, SubsetOfMask) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Mask m = oracle::random_mask(8, 8, 0.6, rng);
    const Mask b = boundary(m);
    for (std::size_t k = 0; k < m.size(); ++k)
      if (b[k]) EXPECT_TRUE(m[k]);
  }
}

TEST(Dilate, ChebyshevBall) {
  Mask dot(5, 5);
  dot.set(2, 2);
  EXPECT_EQ(dilate(dot, 0), dot);
  EXPECT_EQ(dilate(dot, 1), from_rows({".....", ".###.", ".###.", ".###.", "....."}));
  EXPECT_TRUE(dilate(Mask(5, 5), 3).empty());
}

TEST(Dilate, MonotoneInRadius) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const Mask m = oracle::random_mask(10, 10, 0.05, rng);
    Mask prev = dilate(m, 0);
    for (int r = 1; r <= 4; ++r) {
      const Mask cur = dilate(m, r);
      for (std::size_t k = 0; k < m.size(); ++k)
        if (prev[k]) EXPECT_TRUE(cur[k]);
      prev = cur;
    }
  }
}

TEST(BoundingBox, TightAndContainsForeground) {
  EXPECT_FALSE(bounding_box(Mask(3, 3)).has_value());
  const auto b = bounding_box(from_rows({"....", ".#..", "...#"}));
  ASSERT_TRUE(b.has_value());
  EXPECT_EQ(b->x0, 1);
  EXPECT_EQ(b->y0, 1);
  EXPECT_EQ(b->x1, 3);
  EXPECT_EQ(b->y1, 2);
}

}  // namespace
}  // namespace refseg
