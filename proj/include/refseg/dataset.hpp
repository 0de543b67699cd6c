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

// Dataset ingestion: phrase files, per-video metadata, frame images,
// ground-truth masks and RLE prediction files.
//
// On-disk layout, all paths relative to the manifest file:
//
//   manifest.json
//   <frames>/<video_id>/<frame_id>.png                 RGB or gray frames
//   <masks>/<video_id>/<frame_id>.png                  indexed: pixel value == object id
//   <masks>/<video_id>/<object_id>/<frame_id>.png      per_object: nonzero == foreground
//   <phrases...>                                       `<video_id> <object_id> "<phrase>"`
//   <meta>                                             {"videos":{vid:{"objects":{oid:{"class","actor","action"}}}}}

#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "refseg/error.hpp"
#include "refseg/image_io.hpp"
#include "refseg/mask.hpp"
#include "refseg/taxonomy.hpp"
#include "refseg/tensor.hpp"

namespace refseg {

namespace fs = std::filesystem;

enum class PhraseSource { kFirstFrame, kFullVideo, kA2d, kSynthetic };

inline std::string to_string(PhraseSource s) {
  switch (s) {
    case PhraseSource::kFirstFrame: return "first_frame";
    case PhraseSource::kFullVideo: return "full_video";
    case PhraseSource::kA2d: return "a2d";
    case PhraseSource::kSynthetic: return "synthetic";
  }
  return "synthetic";
}

inline PhraseSource phrase_source_from_string(const std::string& s) {
  if (s == "first_frame") return PhraseSource::kFirstFrame;
  if (s == "full_video") return PhraseSource::kFullVideo;
  if (s == "a2d") return PhraseSource::kA2d;
  if (s == "synthetic") return PhraseSource::kSynthetic;
  fail(ErrorCode::kConfigError, "unknown phrase source '" + s + "'");
}

/// Orders numeric strings by value and everything else lexicographically.
inline bool natural_less(const std::string& a, const std::string& b) {
  auto numeric = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  };
  if (numeric(a) && numeric(b)) {
    const auto ta = a.substr(std::min(a.find_first_not_of('0'), a.size() - 1));
    const auto tb = b.substr(std::min(b.find_first_not_of('0'), b.size() - 1));
    if (ta.size() != tb.size()) return ta.size() < tb.size();
    if (ta != tb) return ta < tb;
  }
  return a < b;
}

struct InstanceKey {
  std::string video_id;
  std::string object_id;

  std::string str() const { return video_id + ":" + object_id; }
  friend bool operator==(const InstanceKey&, const InstanceKey&) = default;
  friend bool operator<(const InstanceKey& a, const InstanceKey& b) {
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    return natural_less(a.object_id, b.object_id);
  }
};

inline InstanceKey parse_instance_id(const std::string& id) {
  const auto pos = id.rfind(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 == id.size()) {
    fail(ErrorCode::kUnknownInstance, "instance id '" + id + "' is not <video>:<object>");
  }
  return {id.substr(0, pos), id.substr(pos + 1)};
}

struct Phrase {
  std::string text;
  PhraseSource source = PhraseSource::kSynthetic;
};

struct Instance {
  std::string video_id;
  std::string object_id;
  std::string class_label;
  std::string actor;
  std::string action;
  std::vector<std::string> frames;
  std::map<std::string, Phrase> phrases;  // phrase_id -> phrase

  InstanceKey key() const { return {video_id, object_id}; }
  std::string id() const { return key().str(); }
};

using Dataset = std::map<InstanceKey, Instance>;

struct PhraseLine {
  std::string video_id;
  std::string object_id;
  std::optional<std::string> phrase_id;
  std::string text;
};

/// `<video_id> <object_id> [<phrase_id>] "<phrase>"`
inline std::optional<PhraseLine> parse_phrase_line(const std::string& raw, int lineno) {
  std::string line = raw;
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  const auto first = line.find_first_not_of(" \t");
  if (first == std::string::npos || line[first] == '#') return std::nullopt;
  auto bad = [&](const std::string& why) {
    fail(ErrorCode::kParseError, "line " + std::to_string(lineno) + ": " + why);
  };
  const auto open = line.find('"');
  const auto close = line.rfind('"');
  if (open == std::string::npos || close == open) bad("phrase must be enclosed in double quotes");
  if (line.find_first_not_of(" \t", close + 1) != std::string::npos) bad("trailing text after phrase");
  std::istringstream head(line.substr(0, open));
  std::vector<std::string> fields;
  std::string f;
  while (head >> f) fields.push_back(f);
  if (fields.size() < 2 || fields.size() > 3) bad("expected <video_id> <object_id> [<phrase_id>] \"<phrase>\"");
  PhraseLine pl;
  pl.video_id = fields[0];
  pl.object_id = fields[1];
  if (fields.size() == 3) pl.phrase_id = fields[2];
  pl.text = line.substr(open + 1, close - open - 1);
  if (pl.text.find_first_not_of(" \t") == std::string::npos) bad("phrase text is empty");
  return pl;
}

/// Merges a phrase file into `dataset`. Phrases without an explicit id get
/// `<source>-<k>`, k counting that source's phrases on the instance.
inline void load_phrases(Dataset& dataset, std::istream& in, PhraseSource source) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto pl = parse_phrase_line(line, lineno);
    if (!pl) continue;
    Instance& inst = dataset[{pl->video_id, pl->object_id}];
    inst.video_id = pl->video_id;
    inst.object_id = pl->object_id;
    std::string id;
    if (pl->phrase_id) {
      id = *pl->phrase_id;
    } else {
      int k = 0;
      while (inst.phrases.count(to_string(source) + "-" + std::to_string(k))) ++k;
      id = to_string(source) + "-" + std::to_string(k);
    }
    if (!inst.phrases.emplace(id, Phrase{pl->text, source}).second) {
      fail(ErrorCode::kDuplicatePhraseId,
           "line " + std::to_string(lineno) + ": phrase id " + id + " already used by " + inst.id());
    }
  }
}

inline void load_phrases(Dataset& dataset, const fs::path& path, PhraseSource source) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot read phrase file " + path.string());
  load_phrases(dataset, in, source);
}

inline Dataset load_phrases(const fs::path& path, PhraseSource source) {
  Dataset d;
  load_phrases(d, path, source);
  return d;
}

enum class MaskLayout { kIndexed, kPerObject };

struct PhraseFileRef {
  fs::path path;
  PhraseSource source = PhraseSource::kFullVideo;
};

struct DatasetManifest {
  fs::path root;  // directory of the manifest; relative paths resolve against it
  std::string split = "val";
  fs::path frames;
  fs::path masks;
  MaskLayout mask_layout = MaskLayout::kIndexed;
  std::vector<PhraseFileRef> phrases;
  std::optional<fs::path> meta;
  std::optional<fs::path> annotations;
  std::optional<fs::path> pairs;
  bool allow_varying_dims = false;
};

inline DatasetManifest manifest_from_json(const nlohmann::json& j, const fs::path& root) {
  if (!j.is_object()) fail(ErrorCode::kConfigError, "manifest must be a JSON object");
  DatasetManifest m;
  m.root = root;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : root / p; };
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "split") m.split = v.get<std::string>();
      else if (k == "frames") m.frames = resolve(v.get<std::string>());
      else if (k == "masks") m.masks = resolve(v.get<std::string>());
      else if (k == "mask_layout") {
        const auto s = v.get<std::string>();
        if (s == "indexed") m.mask_layout = MaskLayout::kIndexed;
        else if (s == "per_object") m.mask_layout = MaskLayout::kPerObject;
        else fail(ErrorCode::kConfigError, "mask_layout must be indexed or per_object");
      } else if (k == "phrases") {
        for (const auto& e : v)
          m.phrases.push_back({resolve(e.at("path").get<std::string>()),
                               phrase_source_from_string(e.value("source", "full_video"))});
      } else if (k == "meta") m.meta = resolve(v.get<std::string>());
      else if (k == "annotations") m.annotations = resolve(v.get<std::string>());
      else if (k == "pairs") m.pairs = resolve(v.get<std::string>());
      else if (k == "allow_varying_dims") m.allow_varying_dims = v.get<bool>();
      else fail(ErrorCode::kConfigError, "unknown manifest key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfigError, std::string("bad manifest: ") + e.what());
  }
  if (m.frames.empty()) m.frames = root / "frames";
  if (m.masks.empty()) m.masks = root / "masks";
  return m;
}

inline nlohmann::ordered_json to_json(const DatasetManifest& m) {
  auto rel = [&](const fs::path& p) { return p.lexically_relative(m.root).generic_string(); };
  nlohmann::ordered_json j;
  j["split"] = m.split;
  j["frames"] = rel(m.frames);
  j["masks"] = rel(m.masks);
  j["mask_layout"] = m.mask_layout == MaskLayout::kIndexed ? "indexed" : "per_object";
  j["phrases"] = nlohmann::ordered_json::array();
  for (const auto& p : m.phrases) j["phrases"].push_back({{"path", rel(p.path)}, {"source", to_string(p.source)}});
  if (m.meta) j["meta"] = rel(*m.meta);
  if (m.annotations) j["annotations"] = rel(*m.annotations);
  if (m.pairs) j["pairs"] = rel(*m.pairs);
  if (m.allow_varying_dims) j["allow_varying_dims"] = true;
  return j;
}

inline DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot read manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfigError, std::string("manifest is not JSON: ") + e.what());
  }
  return manifest_from_json(j, fs::absolute(path).parent_path());
}

inline fs::path mask_dir(const DatasetManifest& m, const Instance& inst) {
  return m.mask_layout == MaskLayout::kIndexed ? m.masks / inst.video_id
                                               : m.masks / inst.video_id / inst.object_id;
}

/// Sorted frame ids (file stems) of the PNGs in a directory.
inline std::vector<std::string> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorCode::kMissingFrame, "no frame directory " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end(), natural_less);
  return ids;
}

/// Video id -> objects, from the metadata file.
inline VideoCatalog load_catalog(const fs::path& meta_path) {
  std::ifstream in(meta_path);
  if (!in) fail(ErrorCode::kIoError, "cannot read meta " + meta_path.string());
  VideoCatalog cat;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& [vid, v] : j.at("videos").items()) {
      auto& objs = cat[vid];
      for (const auto& [oid, o] : v.at("objects").items()) objs.push_back({oid, o.value("class", "")});
      std::sort(objs.begin(), objs.end(),
                [](const auto& a, const auto& b) { return natural_less(a.object_id, b.object_id); });
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, "meta file: " + std::string(e.what()));
  }
  return cat;
}

/// Phrases from every listed file, metadata, and each instance's frame list.
inline Dataset load_dataset(const DatasetManifest& m) {
  Dataset d;
  for (const auto& p : m.phrases) load_phrases(d, p.path, p.source);
  if (m.meta) {
    std::ifstream in(*m.meta);
    if (!in) fail(ErrorCode::kIoError, "cannot read meta " + m.meta->string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParseError, "meta file: " + std::string(e.what()));
    }
    for (auto& [key, inst] : d) {
      const auto& videos = j.value("videos", nlohmann::json::object());
      if (!videos.contains(inst.video_id)) continue;
      const auto& objs = videos[inst.video_id].value("objects", nlohmann::json::object());
      if (!objs.contains(inst.object_id)) continue;
      const auto& o = objs[inst.object_id];
      inst.class_label = o.value("class", "");
      inst.actor = o.value("actor", "");
      inst.action = o.value("action", "");
    }
  }
  for (auto& [key, inst] : d) {
    inst.frames = list_frames(mask_dir(m, inst));
    if (inst.frames.empty()) fail(ErrorCode::kMissingFrame, inst.id() + " has no mask frames");
    for (const auto& f : inst.frames) {
      const auto frame = m.frames / inst.video_id / (f + ".png");
      if (!fs::exists(frame)) fail(ErrorCode::kMissingFrame, "missing frame image " + frame.string());
    }
  }
  return d;
}

inline Mask load_gt_mask(const DatasetManifest& m, const Instance& inst, const std::string& frame) {
  const fs::path path = mask_dir(m, inst) / (frame + ".png");
  if (!fs::exists(path)) fail(ErrorCode::kMissingFrame, "missing mask " + path.string());
  const Image8 img = read_png(path);
  if (m.mask_layout == MaskLayout::kPerObject) return binarize(img);
  int label = 0;
  try {
    label = std::stoi(inst.object_id);
  } catch (const std::exception&) {
    fail(ErrorCode::kInvalidArgument, "indexed masks need numeric object ids, got " + inst.object_id);
  }
  return extract_label(img, label);
}

/// Ground truth for every listed frame, in frame order.
inline std::vector<Mask> load_gt_masks(const DatasetManifest& m, const Instance& inst) {
  std::vector<Mask> out;
  out.reserve(inst.frames.size());
  for (const auto& f : inst.frames) {
    out.push_back(load_gt_mask(m, inst, f));
    if (!m.allow_varying_dims && !out.back().same_shape(out.front())) {
      fail(ErrorCode::kDimensionMismatchAcrossFrames, inst.id() + " frame " + f + " changes size");
    }
  }
  return out;
}

/// [channels,H,W] with values in [0,1]. Gray frames are replicated when
/// more channels are requested; extra channels beyond `channels` are dropped.
inline Tensor image_to_tensor(const Image8& img, int channels) {
  Tensor t({channels, img.height, img.width});
  for (int c = 0; c < channels; ++c) {
    const int src = std::min(c, img.channels - 1);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at(c, y, x) = img.at(y, x, src) / 255.0;
  }
  return t;
}

inline Tensor load_frame(const DatasetManifest& m, const Instance& inst, const std::string& frame,
                         int channels) {
  const fs::path path = m.frames / inst.video_id / (frame + ".png");
  if (!fs::exists(path)) fail(ErrorCode::kMissingFrame, "missing frame image " + path.string());
  return image_to_tensor(read_png(path), channels);
}

// ------------------------------------------------------------ predictions

inline fs::path prediction_path(const fs::path& dir, const Instance& inst, const std::string& phrase_key) {
  return dir / inst.video_id / inst.object_id / (phrase_key + ".json");
}

/// One JSON file per (instance, phrase key) holding RLE masks in frame order.
inline void write_predictions(const fs::path& dir, const Instance& inst, const std::string& phrase_key,
                              const std::vector<Mask>& masks) {
  if (masks.size() != inst.frames.size()) {
    fail(ErrorCode::kLengthMismatch, inst.id() + ": " + std::to_string(masks.size()) + " masks for " +
                                         std::to_string(inst.frames.size()) + " frames");
  }
  const fs::path path = prediction_path(dir, inst, phrase_key);
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create " + path.parent_path().string());
  nlohmann::ordered_json j;
  j["video_id"] = inst.video_id;
  j["object_id"] = inst.object_id;
  j["phrase"] = phrase_key;
  j["frames"] = inst.frames;
  j["masks"] = nlohmann::ordered_json::array();
  for (const auto& m : masks) j["masks"].push_back(rle_to_json(encode_rle(m)));
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump() << "\n";
  if (!out) fail(ErrorCode::kIoError, "short write to " + path.string());
}

inline std::vector<Mask> load_predictions(const fs::path& dir, const Instance& inst,
                                          const std::string& phrase_key) {
  const fs::path path = prediction_path(dir, inst, phrase_key);
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "no predictions at " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIoError, path.string() + ": " + e.what());
  }
  const auto frames = j.at("frames").get<std::vector<std::string>>();
  if (frames != inst.frames) fail(ErrorCode::kLengthMismatch, path.string() + ": frame list differs from dataset");
  std::vector<Mask> out;
  for (const auto& r : j.at("masks")) out.push_back(decode_rle(rle_from_json(r)));
  if (out.size() != frames.size()) fail(ErrorCode::kLengthMismatch, path.string() + ": mask count differs");
  return out;
}

}  // namespace refseg
