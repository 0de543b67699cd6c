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

// Subcommand implementations behind the refseg CLI. Each returns a process
// exit code: 0 success, 1 validation failure, 2 usage or configuration error.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "refseg/annotation_service.hpp"
#include "refseg/checkpoint.hpp"
#include "refseg/dataset.hpp"
#include "refseg/evaluation.hpp"
#include "refseg/refnet.hpp"
#include "refseg/report.hpp"
#include "refseg/synthetic.hpp"
#include "refseg/taxonomy.hpp"
#include "refseg/training.hpp"

namespace refseg {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::kConfigError:
    case ErrorCode::kIoError:
    case ErrorCode::kParseError:
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    default:
      return kExitValidation;
  }
}

/// Runs `body`, reporting refseg errors on `err` as `error[<code>]: ...`.
template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    const std::string code(to_string(e.code()));
    std::string msg = e.what();
    if (msg.rfind(code + ": ", 0) == 0) msg.erase(0, code.size() + 2);
    err << "error[" << code << "]: " << msg << "\n";
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    err << "error[ParseError]: " << e.what() << "\n";
    return kExitUsage;
  }
}

inline nlohmann::json read_json_file(const fs::path& path, ErrorCode on_error = ErrorCode::kConfigError) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIoError, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(on_error, path.string() + " is not JSON: " + e.what());
  }
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::kIoError, "short write to " + path.string());
}

// ------------------------------------------------------------ train

/// Training configuration file:
///
///   {"manifest": "data/manifest.json",     or  "synthetic": "overfit"
///    "checkpoint": "out/model.ckpt", "log": "out/train_log.jsonl", "seed": 0,
///    "model": {"preset": "toy", ...ModelConfig overrides},
///    "schedule": {"steps", "lr", "momentum", "batch", "freeze_language",
///                 "mlm_first", "mlm_steps", "mask_fraction", "mlm_lr"}}
///
/// Relative paths resolve against the config file's directory.
struct TrainConfig {
  std::optional<fs::path> manifest;
  std::optional<std::string> synthetic;
  fs::path checkpoint = "model.ckpt";
  std::optional<fs::path> log;
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainSchedule schedule;
  bool mlm_first = false;
  int mlm_steps = 0;
  MlmOptions mlm;
};

inline TrainConfig train_config_from_json(const nlohmann::json& j, const fs::path& base) {
  if (!j.is_object()) fail(ErrorCode::kConfigError, "train config must be a JSON object");
  auto resolve = [&](const nlohmann::json& v) {
    const fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : base / p;
  };
  TrainConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "manifest") c.manifest = resolve(v);
      else if (k == "synthetic") c.synthetic = v.get<std::string>();
      else if (k == "checkpoint") c.checkpoint = resolve(v);
      else if (k == "log") c.log = resolve(v);
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "model" || k == "schedule") continue;
      else fail(ErrorCode::kConfigError, "unknown train config key '" + k + "'");
    }
    if (j.contains("model")) {
      nlohmann::json m = j["model"];
      ModelConfig base_config;
      if (m.contains("preset")) {
        const auto preset = m["preset"].get<std::string>();
        if (preset == "toy") base_config = ModelConfig::toy();
        else if (preset != "default") fail(ErrorCode::kConfigError, "unknown model preset '" + preset + "'");
        m.erase("preset");
      }
      c.model = model_config_from_json(m, base_config);
    }
    if (j.contains("schedule")) {
      for (const auto& [k, v] : j["schedule"].items()) {
        if (k == "steps") c.schedule.steps = v.get<int>();
        else if (k == "lr") c.schedule.lr = v.get<double>();
        else if (k == "momentum") c.schedule.momentum = v.get<double>();
        else if (k == "batch") c.schedule.batch = v.get<int>();
        else if (k == "freeze_language") c.schedule.freeze_language = v.get<bool>();
        else if (k == "mlm_first") c.mlm_first = v.get<bool>();
        else if (k == "mlm_steps") c.mlm_steps = v.get<int>();
        else if (k == "mask_fraction") c.mlm.mask_fraction = v.get<double>();
        else if (k == "mlm_lr") c.mlm.lr = v.get<double>();
        else fail(ErrorCode::kConfigError, "unknown schedule key '" + k + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfigError, std::string("bad train config: ") + e.what());
  }
  if (c.manifest.has_value() == c.synthetic.has_value())
    fail(ErrorCode::kConfigError, "train config needs exactly one of manifest or synthetic");
  if (c.synthetic && *c.synthetic != "overfit")
    fail(ErrorCode::kConfigError, "unknown synthetic dataset '" + *c.synthetic + "'");
  if (c.schedule.batch < 1) fail(ErrorCode::kConfigError, "schedule.batch must be at least 1");
  if (c.mlm_steps < 0) fail(ErrorCode::kConfigError, "schedule.mlm_steps must be non-negative");
  c.model.validate();
  return c;
}

struct TrainingData {
  Vocabulary vocab;
  std::vector<TrainSample> samples;
  std::vector<TokenSeq> phrases;  // MLM corpus
};

inline TrainingData training_data(const TrainConfig& c) {
  TrainingData d;
  if (c.synthetic) {
    d.vocab = Vocabulary::build(synthetic::overfit_phrases(), c.model.vocab_size);
    d.samples = synthetic::overfit_samples(d.vocab, c.model.max_tokens);
    for (const auto& p : synthetic::overfit_phrases()) d.phrases.push_back(d.vocab.encode(p, c.model.max_tokens));
    return d;
  }
  const DatasetManifest m = load_manifest(*c.manifest);
  const Dataset ds = load_dataset(m);
  std::vector<std::string> corpus;
  for (const auto& [key, inst] : ds)
    for (const auto& [pid, p] : inst.phrases) corpus.push_back(p.text);
  d.vocab = Vocabulary::build(corpus, c.model.vocab_size);
  for (const auto& text : corpus) d.phrases.push_back(d.vocab.encode(text, c.model.max_tokens));
  for (const auto& [key, inst] : ds) {
    const auto gts = load_gt_masks(m, inst);
    for (const auto& [pid, p] : inst.phrases) {
      const TokenSeq tokens = d.vocab.encode(p.text, c.model.max_tokens);
      for (std::size_t f = 0; f < inst.frames.size(); ++f)
        d.samples.push_back({load_frame(m, inst, inst.frames[f], c.model.image_channels), tokens, gts[f]});
    }
  }
  if (d.samples.empty()) fail(ErrorCode::kEmptyDataset, "manifest yields no training samples");
  return d;
}

inline int cmd_train(const fs::path& config_path, std::optional<std::uint64_t> seed_override, std::ostream& out,
                     std::ostream& err) {
  return guarded(err, [&] {
    TrainConfig c = train_config_from_json(read_json_file(config_path), fs::absolute(config_path).parent_path());
    if (seed_override) c.seed = *seed_override;
    c.schedule.seed = c.seed;
    const TrainingData data = training_data(c);

    std::string log;
    ModelParams params = init_params(c.model, c.seed);
    if (c.mlm_first && c.mlm_steps > 0) {
      const auto losses = mlm_pretrain(params, data.phrases, c.mlm_steps, c.schedule.batch, c.mlm, c.seed);
      for (std::size_t i = 0; i < losses.size(); ++i)
        log += nlohmann::ordered_json{{"phase", "mlm"}, {"step", i}, {"loss", losses[i]}}.dump() + "\n";
    }
    params = train(std::move(params), data.samples, c.schedule, [&](const StepLog& s) {
      log += nlohmann::ordered_json{{"phase", "segmentation"}, {"step", s.step}, {"loss", s.loss}}.dump() + "\n";
    });
    const double train_iou = mean_train_iou(params, data.samples);
    log += nlohmann::ordered_json{{"phase", "summary"}, {"train_mean_iou", train_iou}, {"seed", c.seed}}.dump() + "\n";

    if (c.checkpoint.has_parent_path()) fs::create_directories(c.checkpoint.parent_path());
    save_checkpoint(c.checkpoint, {params, data.vocab});
    if (c.log) write_text(*c.log, log);
    out << "trained " << c.schedule.steps << " steps on " << data.samples.size() << " samples; train mean IoU "
        << pct(train_iou) << "\n"
        << "checkpoint: " << c.checkpoint.string() << "\n";
    return kExitOk;
  });
}

// ------------------------------------------------------------ eval

struct EvalArgs {
  std::optional<fs::path> checkpoint;
  std::optional<fs::path> predictions;
  fs::path manifest;
  std::vector<std::string> phrase_modes{"full"};
  std::vector<std::string> group_by;
  fs::path out = "eval_out";
  std::optional<int> tolerance;
};

inline EvalOptions eval_options(const EvalArgs& a) {
  EvalOptions o;
  o.modes.clear();
  std::set<PhraseMode> seen;
  for (const auto& m : a.phrase_modes) {
    if (m == "all") {
      for (auto x : kAllPhraseModes)
        if (seen.insert(x).second) o.modes.push_back(x);
    } else if (auto x = phrase_mode_from_string(m); seen.insert(x).second) {
      o.modes.push_back(x);
    }
  }
  for (const auto& g : a.group_by) {
    if (g == "difficulty") o.group_difficulty = true;
    else if (g == "category") o.group_category = true;
    else fail(ErrorCode::kConfigError, "unknown group '" + g + "' (difficulty or category)");
  }
  o.tolerance = a.tolerance;
  return o;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (a.checkpoint.has_value() == a.predictions.has_value())
      fail(ErrorCode::kConfigError, "give exactly one of --checkpoint or --predictions");
    EvalOptions opt = eval_options(a);
    const DatasetManifest m = load_manifest(a.manifest);
    const Dataset ds = load_dataset(m);
    std::optional<Checkpoint> ck;
    Predictor predictor;
    if (a.checkpoint) {
      ck = load_checkpoint(*a.checkpoint);
      predictor = model_predictor(*ck, m);
      opt.save_predictions = a.out / "predictions";
    } else {
      predictor = directory_predictor(*a.predictions);
    }
    const EvalSuite suite = evaluate(m, ds, predictor, opt);
    const std::string text = render_suite(suite);
    write_text(a.out / "report.json", to_json(suite).dump(2) + "\n");
    write_text(a.out / "report.txt", text);
    for (const auto& w : suite.warnings) err << "warning: " << w << "\n";
    out << text;
    return kExitOk;
  });
}

// ------------------------------------------------------------ analyze

struct Analysis {
  std::size_t records = 0;
  std::size_t annotators = 0;
  Distribution dist;
  std::vector<CategoryKappa> kappas;
};

inline Analysis analyze_records(const std::vector<AnnotationRecord>& records, KappaVariant variant) {
  if (records.empty()) fail(ErrorCode::kEmptyInput, "no annotation records");
  Analysis a;
  a.records = records.size();
  std::set<std::string> ann;
  for (const auto& r : records) ann.insert(r.annotator_id);
  a.annotators = ann.size();
  a.dist = distribution(aggregate(records));
  a.kappas = category_kappas(records, variant);
  return a;
}

inline nlohmann::ordered_json to_json(const Analysis& a) {
  nlohmann::ordered_json j;
  j["records"] = a.records;
  j["items"] = a.dist.count;
  j["annotators"] = a.annotators;
  j["difficulty"] = {{"trivial", a.dist.trivial}, {"non_trivial", a.dist.non_trivial}};
  j["correctness"] = {{"valid_re", a.dist.valid_re}, {"no_re", a.dist.no_re}, {"wrong_object", a.dist.wrong_object}};
  j["breakdown"] = a.dist.breakdown;
  j["categories"] = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kNumCategories; ++i) j["categories"][kCategoryNames[i]] = a.dist.category[i];
  j["redundancy_ratio"] = a.dist.redundancy_ratio;
  j["kappa"] = nlohmann::ordered_json::array();
  std::optional<double> lo, hi;
  for (const auto& k : a.kappas) {
    nlohmann::ordered_json e{{"category", to_string(k.category)}, {"items", k.items}, {"raters", k.raters}};
    e["kappa"] = k.kappa ? nlohmann::ordered_json(*k.kappa) : nlohmann::ordered_json(nullptr);
    j["kappa"].push_back(e);
    if (k.kappa) {
      lo = lo ? std::min(*lo, *k.kappa) : *k.kappa;
      hi = hi ? std::max(*hi, *k.kappa) : *k.kappa;
    }
  }
  j["kappa_range"] = lo ? nlohmann::ordered_json{{"min", *lo}, {"max", *hi}} : nlohmann::ordered_json(nullptr);
  return j;
}

inline std::string render_analysis(const Analysis& a) {
  std::ostringstream out;
  out << a.records << " records, " << a.dist.count << " phrases, " << a.annotators << " annotators\n\n";
  TextTable share;
  share.add_row({"", "%"});
  share.add_rule();
  for (const char* k : {"trivial", "non_trivial", "no_re", "wrong_object"}) share.add_row({k, pct(a.dist.breakdown.at(k))});
  share.add_row({"redundant", pct(a.dist.redundancy_ratio)});
  out << "Difficulty and correctness\n" << share.str() << "\n";

  TextTable cats;
  cats.add_row({"category", "% of phrases", "kappa", "items"});
  cats.add_rule();
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    const auto& k = a.kappas[i];
    char kbuf[32] = "undefined";
    if (k.kappa) std::snprintf(kbuf, sizeof(kbuf), "%.3f", *k.kappa);
    cats.add_row({kCategoryNames[i], pct(a.dist.category[i]), kbuf, std::to_string(k.items)});
  }
  out << "Categories\n" << cats.str();
  return out.str();
}

inline int cmd_analyze(const fs::path& annotations, const fs::path& out_dir, KappaVariant variant, std::ostream& out,
                       std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(annotations);
    if (!in) fail(ErrorCode::kIoError, "cannot read " + annotations.string());
    const Analysis a = analyze_records(read_records(in), variant);
    const std::string text = render_analysis(a);
    write_text(out_dir / "analysis.json", to_json(a).dump(2) + "\n");
    write_text(out_dir / "analysis.txt", text);
    out << text;
    return kExitOk;
  });
}

// ------------------------------------------------------------ validate-pairs

inline int cmd_validate_pairs(const fs::path& pairs_path, const fs::path& annotations, std::ostream& out,
                              std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream pin(pairs_path);
    if (!pin) fail(ErrorCode::kIoError, "cannot read " + pairs_path.string());
    std::ifstream ain(annotations);
    if (!ain) fail(ErrorCode::kIoError, "cannot read " + annotations.string());
    const auto pairs = read_pairs(pin);
    const auto voted = voted_category_sets(read_records(ain));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = pairs[i];
      const std::string name = p.instance_id + " " + p.base_phrase_id + " -> " + p.variant_phrase_id;
      PairValidation v;
      try {
        v = validate_pair(p, voted);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kMissingCategorySet) throw;
        out << "pair " << i + 1 << " (" << name << "): " << e.what() << "\n";
        ++bad;
        continue;
      }
      if (v.ok()) continue;
      ++bad;
      out << "pair " << i + 1 << " (" << name << "):";
      for (const auto& viol : v.violations) out << " " << to_string(viol.reason) << " [" << viol.detail << "]";
      out << "\n";
    }
    out << pairs.size() - bad << " of " << pairs.size() << " pairs valid\n";
    return bad == 0 ? kExitOk : kExitValidation;
  });
}

// ------------------------------------------------------------ report

inline int cmd_report(const fs::path& in_dir, const std::string& format, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (format != "json" && format != "txt") fail(ErrorCode::kConfigError, "format must be json or txt");
    const fs::path path = fs::is_directory(in_dir) ? in_dir / "report.json" : in_dir;
    const EvalSuite suite = eval_suite_from_json(read_json_file(path, ErrorCode::kParseError));
    if (format == "json") out << to_json(suite).dump(2) << "\n";
    else out << render_suite(suite);
    return kExitOk;
  });
}

}  // namespace refseg
