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

// Procedurally generated scenes for smoke tests and demos.

#pragma once

#include <array>
#include <string>
#include <vector>

#include "refseg/mask.hpp"
#include "refseg/tensor.hpp"
#include "refseg/tokenizer.hpp"
#include "refseg/training.hpp"

namespace refseg::synthetic {

using Rgb = std::array<double, 3>;

inline constexpr Rgb kRed{0.9, 0.1, 0.1};
inline constexpr Rgb kBlue{0.1, 0.2, 0.9};
inline constexpr Rgb kBackground{0.3, 0.3, 0.3};

struct Rect {
  int x0, y0, x1, y1;  // half-open
  bool contains(int y, int x) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct Shape2d {
  Rect rect;
  Rgb color;
};

inline Tensor render(int height, int width, const std::vector<Shape2d>& shapes,
                     Rgb background = kBackground) {
  Tensor img({3, height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      Rgb c = background;
      for (const auto& s : shapes)
        if (s.rect.contains(y, x)) c = s.color;
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = c[ch];
    }
  return img;
}

inline Mask rect_mask(int height, int width, const Rect& r) {
  Mask m(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (r.contains(y, x)) m.set(y, x);
  return m;
}

inline const std::vector<std::string>& overfit_phrases() {
  static const std::vector<std::string> p{"the red block", "the blue block"};
  return p;
}

/// Two scenes with a red and a blue block in swapped positions; each scene is
/// paired with both phrases, so the target depends on the phrase.
inline std::vector<TrainSample> overfit_samples(const Vocabulary& vocab, int max_tokens,
                                                int size = 32) {
  const int half = size / 2;
  const Rect left{0, size / 8, half, size - size / 8};
  const Rect right{half, size / 8, size, size - size / 8};
  std::vector<TrainSample> out;
  for (int scene = 0; scene < 2; ++scene) {
    const Rect red = scene == 0 ? left : right;
    const Rect blue = scene == 0 ? right : left;
    const Tensor img = render(size, size, {{red, kRed}, {blue, kBlue}});
    out.push_back({img, vocab.encode(overfit_phrases()[0], max_tokens), rect_mask(size, size, red)});
    out.push_back({img, vocab.encode(overfit_phrases()[1], max_tokens), rect_mask(size, size, blue)});
  }
  return out;
}

}  // namespace refseg::synthetic
