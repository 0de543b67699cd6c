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

// Dataset-level evaluation: predictions for every (instance, phrase) of a
// manifest, scored under one or more phrase modes, optionally grouped by
// difficulty and by category presence.

#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "refseg/checkpoint.hpp"
#include "refseg/dataset.hpp"
#include "refseg/metrics.hpp"
#include "refseg/refnet.hpp"
#include "refseg/report.hpp"
#include "refseg/taxonomy.hpp"

namespace refseg {

/// One scored unit: an instance under one phrase. In full mode there is a
/// unit per phrase; the other modes derive a single phrase per instance.
struct EvalUnit {
  const Instance* instance = nullptr;
  std::string phrase_id;   // empty outside full mode
  std::string phrase_key;  // file stem of the prediction
  std::string text;

  std::string id() const { return phrase_id.empty() ? instance->id() : instance->id() + "/" + phrase_id; }
};

inline std::vector<EvalUnit> eval_units(const Dataset& dataset, PhraseMode mode) {
  std::vector<EvalUnit> out;
  for (const auto& [key, inst] : dataset) {
    if (mode == PhraseMode::kFull) {
      for (const auto& [pid, phrase] : inst.phrases) out.push_back({&inst, pid, pid, phrase.text});
    } else {
      const PhraseMeta meta{inst.actor, inst.action, ""};
      out.push_back({&inst, "", to_string(mode), phrase_variant(meta, mode)});
    }
  }
  return out;
}

/// Masks for every frame of `unit.instance`, in frame order.
using Predictor = std::function<std::vector<Mask>(const EvalUnit& unit)>;

inline Predictor directory_predictor(std::filesystem::path dir) {
  return [dir = std::move(dir)](const EvalUnit& u) { return load_predictions(dir, *u.instance, u.phrase_key); };
}

inline Predictor model_predictor(const Checkpoint& ck, const DatasetManifest& manifest) {
  return [&ck, &manifest](const EvalUnit& u) {
    const TokenSeq tokens = ck.vocab.encode(u.text, ck.params.config.max_tokens);
    std::vector<Mask> out;
    for (const auto& f : u.instance->frames)
      out.push_back(predict(ck.params, load_frame(manifest, *u.instance, f, ck.params.config.image_channels), tokens));
    return out;
  };
}

struct EvalOptions {
  std::vector<PhraseMode> modes{PhraseMode::kFull};
  bool group_difficulty = false;
  bool group_category = false;
  std::optional<int> tolerance;
  std::vector<double> thresholds = default_thresholds();
  std::optional<std::filesystem::path> save_predictions;
};

/// Two aggregations of the same units: every phrase counted separately, and
/// only the best-scoring phrase (by J&F) kept per object.
struct ModeResult {
  EvalReport per_phrase;
  EvalReport best_per_object;
};

struct EvalSuite {
  std::map<PhraseMode, ModeResult> modes;
  std::vector<std::string> warnings;
};

namespace detail {

inline EvalReport labelled_report(const std::vector<InstanceResult>& results,
                                  const std::map<std::string, std::vector<std::string>>& labels,
                                  const std::vector<double>& thresholds) {
  return grouped_report(
      results,
      [&](const InstanceResult& r) {
        auto it = labels.find(r.id);
        return it == labels.end() ? std::vector<std::string>{} : it->second;
      },
      thresholds);
}

}  // namespace detail

inline EvalSuite evaluate(const DatasetManifest& manifest, const Dataset& dataset, const Predictor& predictor,
                          const EvalOptions& opt) {
  EvalSuite suite;
  if (dataset.empty()) fail(ErrorCode::kEmptyDataset, "manifest lists no instances");

  std::optional<VideoCatalog> catalog;
  if (opt.group_difficulty) {
    if (manifest.meta) catalog = load_catalog(*manifest.meta);
    else suite.warnings.push_back("difficulty groups omitted: manifest has no meta file");
  }
  std::map<PhraseKey, VotedItem> voted;
  if (opt.group_category) {
    if (manifest.annotations) {
      std::ifstream in(*manifest.annotations);
      if (!in) fail(ErrorCode::kIoError, "cannot read " + manifest.annotations->string());
      const auto records = read_records(in);
      for (auto& item : aggregate(records)) voted.emplace(PhraseKey{item.instance_id, item.phrase_id}, item);
    } else {
      suite.warnings.push_back("category groups omitted: manifest has no annotations file");
    }
  }

  std::map<std::string, std::vector<Mask>> gt_cache;
  for (const PhraseMode mode : opt.modes) {
    std::vector<EvalUnit> units;
    try {
      units = eval_units(dataset, mode);
    } catch (const Error& e) {
      suite.warnings.push_back("phrase mode " + to_string(mode) + " skipped: " + e.what());
      continue;
    }
    std::vector<InstanceResult> results;
    std::map<std::string, std::vector<std::string>> labels;
    std::map<std::string, std::size_t> best;  // instance id -> index into results
    std::set<std::string> missing_category;
    for (const auto& u : units) {
      const Instance& inst = *u.instance;
      auto git = gt_cache.find(inst.id());
      if (git == gt_cache.end()) git = gt_cache.emplace(inst.id(), load_gt_masks(manifest, inst)).first;
      const auto& gts = git->second;
      const auto preds = predictor(u);
      if (opt.save_predictions) write_predictions(*opt.save_predictions, inst, u.phrase_key, preds);
      const int tol = opt.tolerance.value_or(default_tolerance(gts.front().height(), gts.front().width()));
      results.push_back(score_instance(u.id(), preds, gts, tol));

      auto& l = labels[u.id()];
      if (catalog) {
        try {
          l.push_back(to_string(auto_difficulty(inst.video_id, inst.object_id, *catalog)));
        } catch (const Error& e) {
          suite.warnings.push_back(std::string("no difficulty for ") + inst.id() + ": " + e.what());
        }
      }
      if (opt.group_category && !voted.empty() && mode == PhraseMode::kFull) {
        auto vit = voted.find({inst.id(), u.phrase_id});
        if (vit == voted.end()) {
          missing_category.insert(u.id());
        } else if (vit->second.correctness == Correctness::kValidRe) {
          for (auto& g : category_group_labels(vit->second.categories)) l.push_back(std::move(g));
        }
      }

      const double jf = jf_from_frames(results.back().frames).jf;
      auto bit = best.find(inst.id());
      if (bit == best.end()) best.emplace(inst.id(), results.size() - 1);
      else if (jf > jf_from_frames(results[bit->second].frames).jf) bit->second = results.size() - 1;
    }
    if (!missing_category.empty()) {
      suite.warnings.push_back(std::to_string(missing_category.size()) +
                               " phrases have no annotations and are left out of category groups");
    }

    ModeResult mr;
    mr.per_phrase = detail::labelled_report(results, labels, opt.thresholds);
    std::vector<InstanceResult> best_results;
    std::map<std::string, std::vector<std::string>> best_labels;
    for (const auto& [iid, idx] : best) {
      InstanceResult r = results[idx];
      best_labels[iid] = labels[r.id];
      r.id = iid;
      best_results.push_back(std::move(r));
    }
    mr.best_per_object = detail::labelled_report(best_results, best_labels, opt.thresholds);
    suite.modes.emplace(mode, std::move(mr));
  }
  if (suite.modes.empty()) fail(ErrorCode::kEmptyDataset, "no phrase mode could be evaluated");
  return suite;
}

inline nlohmann::ordered_json to_json(const EvalSuite& s) {
  nlohmann::ordered_json j;
  j["phrase_modes"] = nlohmann::ordered_json::object();
  for (const auto& [mode, mr] : s.modes)
    j["phrase_modes"][to_string(mode)] = {{"per_phrase", to_json(mr.per_phrase)},
                                          {"best_per_object", to_json(mr.best_per_object)}};
  j["warnings"] = s.warnings;
  return j;
}

inline EvalSuite eval_suite_from_json(const nlohmann::json& j) {
  EvalSuite s;
  try {
    for (const auto& [name, v] : j.at("phrase_modes").items())
      s.modes[phrase_mode_from_string(name)] = {eval_report_from_json(v.at("per_phrase")),
                                                eval_report_from_json(v.at("best_per_object"))};
    if (j.contains("warnings")) s.warnings = j["warnings"].get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("report: ") + e.what());
  }
  return s;
}

/// All tables for a suite. The per-phrase aggregation feeds the tables;
/// both aggregations get a J&F line.
inline std::string render_suite(const EvalSuite& s) {
  std::string out;
  std::vector<std::pair<std::string, EvalReport>> prec_rows;
  std::vector<std::pair<PhraseMode, EvalReport>> mode_rows;
  for (const PhraseMode m : kAllPhraseModes) {
    auto it = s.modes.find(m);
    if (it == s.modes.end()) continue;
    prec_rows.emplace_back(display_name(m), it->second.per_phrase);
    mode_rows.emplace_back(m, it->second.per_phrase);
  }
  out += "Precision and IoU\n" + render_precision_table(prec_rows) + "\n";

  auto full = s.modes.find(PhraseMode::kFull);
  if (full != s.modes.end()) {
    bool any_category = false;
    for (const auto& label : category_columns()) any_category |= full->second.per_phrase.groups.count(label) > 0;
    if (any_category) out += "Category presence (mean IoU)\n" + render_category_table(full->second.per_phrase) + "\n";
  }
  out += "IoU by phrase mode\n" + render_phrase_mode_table(mode_rows) + "\n";

  for (const auto& [mode, mr] : s.modes) {
    out += render_jf_line(display_name(mode) + ", mean over phrases", mr.per_phrase);
    out += render_jf_line(display_name(mode) + ", best phrase per object", mr.best_per_object);
  }
  for (const auto& w : s.warnings) out += "warning: " + w + "\n";
  return out;
}

}  // namespace refseg
