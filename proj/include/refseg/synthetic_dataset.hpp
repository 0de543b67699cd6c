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

// Writes a small, fully specified dataset to disk: frames, indexed masks,
// one phrase per object, metadata and a three-annotator annotation file.

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "refseg/dataset.hpp"
#include "refseg/image_io.hpp"
#include "refseg/taxonomy.hpp"

namespace refseg::synthetic {

struct VideoSpec {
  std::string video_id;
  std::vector<std::string> classes;  // object k+1 has classes[k]
};

/// 20 objects over 9 videos with 9 trivial and 11 non-trivial referents.
inline std::vector<VideoSpec> default_videos() {
  return {
      {"v00", {"person"}},
      {"v01", {"dog", "person"}},
      {"v02", {"person", "person"}},
      {"v03", {"car", "car", "bike"}},
      {"v04", {"bird"}},
      {"v05", {"cat", "cat", "cat"}},
      {"v06", {"ball", "person", "dog"}},
      {"v07", {"horse", "horse"}},
      {"v08", {"person", "car", "person"}},
  };
}

struct DatasetOptions {
  std::vector<VideoSpec> videos = default_videos();
  int size = 32;
  int frames = 3;
  std::vector<std::string> annotators{"ann1", "ann2", "ann3"};
};

inline const std::vector<std::string>& action_words() {
  static const std::vector<std::string> a{"walking", "running", "jumping", "rolling", "flying", "eating"};
  return a;
}

inline constexpr std::uint8_t kPalette[4][3] = {{220, 30, 30}, {30, 220, 30}, {30, 30, 220}, {220, 220, 30}};

inline const std::vector<std::string>& colour_words() {
  static const std::vector<std::string> c{"red", "green", "blue", "yellow"};
  return c;
}

/// Category flags for the k-th object (over all videos) so that every
/// presence/absence group of the breakdown has members.
inline CategoryFlags object_categories(int k) {
  CategoryFlags f{};
  f[index_of(SemanticCategory::kAppearance)] = k % 2 == 0;
  f[index_of(SemanticCategory::kCategory)] = true;
  f[index_of(SemanticCategory::kLocation)] = (k / 2) % 2 == 0;
  f[index_of(SemanticCategory::kMotion)] = (k / 4) % 2 == 0;
  f[index_of(SemanticCategory::kStatic)] = k % 3 == 0;
  return f;
}

/// Object `obj` (0-based) of `n` occupies a vertical strip that shifts down
/// one row per frame.
inline Box object_box(int size, int n, int obj, int frame) {
  const int strip = size / n;
  return {obj * strip + 1, 2 + frame, (obj + 1) * strip - 2, size - 6 + frame};
}

/// Writes everything under `dir` and returns the manifest path.
inline std::filesystem::path write_dataset(const std::filesystem::path& dir, const DatasetOptions& opt = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream phrases(dir / "phrases.txt");
  std::ofstream annotations(dir / "annotations.jsonl");
  nlohmann::ordered_json meta;
  meta["videos"] = nlohmann::ordered_json::object();
  VideoCatalog catalog;
  for (const auto& v : opt.videos)
    for (std::size_t i = 0; i < v.classes.size(); ++i) catalog[v.video_id].push_back({std::to_string(i + 1), v.classes[i]});

  int k = 0;
  for (const auto& v : opt.videos) {
    const int n = static_cast<int>(v.classes.size());
    fs::create_directories(dir / "frames" / v.video_id);
    fs::create_directories(dir / "masks" / v.video_id);
    for (int t = 0; t < opt.frames; ++t) {
      Image8 rgb{opt.size, opt.size, 3, std::vector<std::uint8_t>(3 * opt.size * opt.size, 60)};
      Image8 idx{opt.size, opt.size, 1, std::vector<std::uint8_t>(opt.size * opt.size, 0)};
      for (int o = 0; o < n; ++o) {
        const Box b = object_box(opt.size, n, o, t);
        const int colour = (k + o) % 4;
        for (int y = b.y0; y <= b.y1; ++y)
          for (int x = b.x0; x <= b.x1; ++x) {
            idx.pixels[y * opt.size + x] = static_cast<std::uint8_t>(o + 1);
            for (int c = 0; c < 3; ++c)
              rgb.pixels[(y * opt.size + x) * 3 + c] = kPalette[colour][c];
          }
      }
      char name[16];
      std::snprintf(name, sizeof(name), "%05d.png", t);
      write_png(dir / "frames" / v.video_id / name, rgb);
      write_png(dir / "masks" / v.video_id / name, idx);
    }
    for (int o = 0; o < n; ++o, ++k) {
      const std::string oid = std::to_string(o + 1);
      const std::string action = action_words()[k % action_words().size()];
      const std::string colour = colour_words()[k % 4];
      static const char* places[] = {"on the left", "in the middle", "on the right"};
      phrases << v.video_id << " " << oid << " \"the " << colour << " " << v.classes[o] << " " << action << " "
              << places[std::min(o, 2)] << "\"\n";
      meta["videos"][v.video_id]["objects"][oid] = {{"class", v.classes[o]}, {"actor", v.classes[o]}, {"action", action}};

      const Difficulty diff = auto_difficulty(v.video_id, oid, catalog);
      for (std::size_t a = 0; a < opt.annotators.size(); ++a) {
        AnnotationRecord r;
        r.annotator_id = opt.annotators[a];
        r.instance_id = v.video_id + ":" + oid;
        r.phrase_id = "synthetic-0";
        r.difficulty = diff;
        r.correctness = Correctness::kValidRe;
        r.categories = object_categories(k);
        // One dissenting vote on appearance now and then; the majority holds.
        if (a == 2 && k % 5 == 0) r.categories[index_of(SemanticCategory::kAppearance)] ^= true;
        r.redundancy = Redundancy::kMinimal;
        r.timestamp = "2026-01-01T00:00:00Z";
        annotations << record_to_line(r);
      }
    }
  }
  std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";

  DatasetManifest m;
  m.root = fs::absolute(dir);
  m.split = "synthetic";
  m.frames = m.root / "frames";
  m.masks = m.root / "masks";
  m.mask_layout = MaskLayout::kIndexed;
  m.phrases = {{m.root / "phrases.txt", PhraseSource::kSynthetic}};
  m.meta = m.root / "meta.json";
  m.annotations = m.root / "annotations.jsonl";
  const fs::path path = dir / "manifest.json";
  std::ofstream(path) << to_json(m).dump(2) << "\n";
  return path;
}

}  // namespace refseg::synthetic
