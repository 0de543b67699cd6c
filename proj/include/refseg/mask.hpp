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

// Binary masks, their run-length encoding and the pixel primitives the
// evaluation measures are built from.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "refseg/error.hpp"

namespace refseg {

/// Dense row-major binary pixel grid.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool fill = false) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
      fail(ErrorCode::kInvalidArgument,
           "mask dimensions must be positive, got " + std::to_string(height) + "x" +
               std::to_string(width));
    }
    bits_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width),
                 fill ? 1 : 0);
  }

  static Mask from_bits(int height, int width, const std::vector<std::uint8_t>& bits) {
    Mask m(height, width);
    if (bits.size() != m.bits_.size()) {
      fail(ErrorCode::kCountMismatch, "bit vector has " + std::to_string(bits.size()) +
                                          " entries, expected " + std::to_string(m.bits_.size()));
    }
    for (std::size_t i = 0; i < bits.size(); ++i) m.bits_[i] = bits[i] ? 1 : 0;
    return m;
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool at(int y, int x) const { return bits_[index(y, x)] != 0; }
  void set(int y, int x, bool v = true) { bits_[index(y, x)] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool empty() const noexcept { return count() == 0; }

  bool same_shape(const Mask& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.bits_ == b.bits_;
  }

 private:
  std::size_t index(int y, int x) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Alternating background/foreground run lengths over the row-major scan.
/// The first run is background and may be zero; no other run is zero.
struct Rle {
  int height = 0;
  int width = 0;
  std::vector<std::uint64_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

inline void require_same_shape(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::kDimensionMismatch,
         std::to_string(a.height()) + "x" + std::to_string(a.width()) + " vs " +
             std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

inline Rle encode_rle(const Mask& mask) {
  Rle rle{mask.height(), mask.width(), {}};
  std::uint8_t current = 0;
  std::uint64_t run = 0;
  for (std::uint8_t b : mask.bits()) {
    if (b != current) {
      rle.counts.push_back(run);
      run = 0;
      current = b;
    }
    ++run;
  }
  rle.counts.push_back(run);
  return rle;
}

inline Mask decode_rle(const Rle& rle) {
  Mask mask(rle.height, rle.width);
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    if (i > 0 && rle.counts[i] == 0) {
      fail(ErrorCode::kInvalidArgument, "interior zero run at position " + std::to_string(i));
    }
    total += rle.counts[i];
  }
  if (total != mask.size()) {
    fail(ErrorCode::kCountMismatch, "run lengths sum to " + std::to_string(total) +
                                        ", expected " + std::to_string(mask.size()));
  }
  std::vector<std::uint8_t> bits;
  bits.reserve(mask.size());
  std::uint8_t value = 0;
  for (std::uint64_t run : rle.counts) {
    bits.insert(bits.end(), run, value);
    value ^= 1;
  }
  return Mask::from_bits(rle.height, rle.width, bits);
}

// {"size":[H,W],"counts":[...]}
inline nlohmann::ordered_json rle_to_json(const Rle& rle) {
  nlohmann::ordered_json j;
  j["size"] = {rle.height, rle.width};
  j["counts"] = rle.counts;
  return j;
}

inline Rle rle_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("size") || !j.contains("counts") || !j["size"].is_array() ||
      j["size"].size() != 2 || !j["counts"].is_array()) {
    fail(ErrorCode::kParseError, "RLE object needs \"size\":[H,W] and \"counts\":[...]");
  }
  Rle rle;
  rle.height = j["size"][0].get<int>();
  rle.width = j["size"][1].get<int>();
  rle.counts = j["counts"].get<std::vector<std::uint64_t>>();
  return rle;
}

/// Pixel counts shared by every overlap measure.
struct Overlap {
  std::uint64_t intersection = 0;
  std::uint64_t union_ = 0;

  Overlap& operator+=(const Overlap& o) {
    intersection += o.intersection;
    union_ += o.union_;
    return *this;
  }
  /// Empty union counts as perfect agreement.
  double ratio() const {
    return union_ == 0 ? 1.0 : static_cast<double>(intersection) / static_cast<double>(union_);
  }
};

inline Overlap overlap(const Mask& a, const Mask& b) {
  require_same_shape(a, b);
  Overlap o;
  const auto& x = a.bits();
  const auto& y = b.bits();
  for (std::size_t i = 0; i < x.size(); ++i) {
    o.intersection += (x[i] & y[i]);
    o.union_ += (x[i] | y[i]);
  }
  return o;
}

inline double iou(const Mask& a, const Mask& b) { return overlap(a, b).ratio(); }

/// Foreground pixels 4-adjacent to background or to the image border.
inline Mask boundary(const Mask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == h - 1 || x == w - 1 || !mask.at(y - 1, x) ||
                        !mask.at(y + 1, x) || !mask.at(y, x - 1) || !mask.at(y, x + 1);
      if (edge) out.set(y, x);
    }
  }
  return out;
}

/// Grows the pixel set by a Chebyshev ball of the given radius.
inline Mask dilate(const Mask& mask, int radius) {
  if (radius < 0) fail(ErrorCode::kInvalidArgument, "dilation radius must be non-negative");
  if (radius == 0) return mask;
  const int h = mask.height();
  const int w = mask.width();
  // Square structuring element is separable: max over rows, then columns.
  Mask rows(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx)
        rows.set(y, xx);
    }
  }
  Mask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!rows.at(y, x)) continue;
      for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy)
        out.set(yy, x);
    }
  }
  return out;
}

/// Inclusive pixel bounds.
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  friend bool operator==(const Box&, const Box&) = default;
};

inline std::optional<Box> bounding_box(const Mask& mask) {
  std::optional<Box> box;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(y, x)) continue;
      if (!box) {
        box = Box{x, y, x, y};
      } else {
        box->x0 = std::min(box->x0, x);
        box->y0 = std::min(box->y0, y);
        box->x1 = std::max(box->x1, x);
        box->y1 = std::max(box->y1, y);
      }
    }
  }
  return box;
}

}  // namespace refseg
