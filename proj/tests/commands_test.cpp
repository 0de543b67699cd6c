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

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <sstream>

#include "refseg/commands.hpp"
#include "refseg/synthetic_dataset.hpp"

namespace refseg {
namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("refseg_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json tiny_model() {
  return {{"preset", "toy"},  {"backbone_width", {4, 8}}, {"output_stride", 4}, {"aspp_rates", {1, 2}},
          {"fusion_dim", 8},  {"lang_dim", 8},            {"lang_heads", 2},    {"ffn_dim", 16},
          {"vocab_size", 32}, {"max_tokens", 10}};
}

class Commands : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fresh_dir("commands"));
    manifest_ = new fs::path(synthetic::write_dataset(*dir_ / "data"));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete manifest_;
    delete dir_;
  }

  static fs::path write_config(const std::string& name, nlohmann::json j) {
    const fs::path p = *dir_ / (name + ".json");
    write_text(p, j.dump());
    return p;
  }

  static fs::path* dir_;
  static fs::path* manifest_;
  std::ostringstream out_, err_;
};
fs::path* Commands::dir_ = nullptr;
fs::path* Commands::manifest_ = nullptr;

TEST_F(Commands, TrainZeroStepsSavesInitialization) {
  const auto cfg = write_config("zero", {{"synthetic", "overfit"},
                                         {"checkpoint", "zero.ckpt"},
                                         {"seed", 5},
                                         {"model", tiny_model()},
                                         {"schedule", {{"steps", 0}}}});
  ASSERT_EQ(cmd_train(cfg, std::nullopt, out_, err_), kExitOk) << err_.str();
  const Checkpoint ck = load_checkpoint(*dir_ / "zero.ckpt");
  EXPECT_EQ(ck.params.weights, init_params(ck.params.config, 5).weights);
}

TEST_F(Commands, TrainIsReproducibleAndLogs) {
  nlohmann::json j{{"synthetic", "overfit"},
                   {"checkpoint", "a.ckpt"},
                   {"log", "a.jsonl"},
                   {"model", tiny_model()},
                   {"schedule", {{"steps", 3}, {"batch", 2}, {"mlm_first", true}, {"mlm_steps", 2}}}};
  ASSERT_EQ(cmd_train(write_config("a", j), 7, out_, err_), kExitOk) << err_.str();
  j["checkpoint"] = "b.ckpt";
  j["log"] = "b.jsonl";
  ASSERT_EQ(cmd_train(write_config("b", j), 7, out_, err_), kExitOk);
  EXPECT_EQ(slurp(*dir_ / "a.ckpt"), slurp(*dir_ / "b.ckpt"));

  std::istringstream log(slurp(*dir_ / "a.jsonl"));
  std::vector<nlohmann::json> lines;
  std::string line;
  while (std::getline(log, line)) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 6u);
  EXPECT_EQ(lines[0]["phase"], "mlm");
  EXPECT_EQ(lines[2]["phase"], "segmentation");
  EXPECT_EQ(lines[5]["phase"], "summary");
  EXPECT_EQ(lines[5]["seed"], 7);
}

TEST_F(Commands, TrainConfigErrorsAreUsageErrors) {
  const auto cfg = write_config("bad", {{"synthetic", "overfit"}, {"model", tiny_model()}, {"schedul", {}}});
  EXPECT_EQ(cmd_train(cfg, std::nullopt, out_, err_), kExitUsage);
  EXPECT_NE(err_.str().find("error[ConfigError]"), std::string::npos);
  EXPECT_EQ(cmd_train(*dir_ / "missing.json", std::nullopt, out_, err_), kExitUsage);
}

TEST_F(Commands, EvalFromCheckpointWritesReportAndPredictions) {
  const auto cfg = write_config("ck", {{"manifest", manifest_->string()},
                                       {"checkpoint", "ds.ckpt"},
                                       {"model", tiny_model()},
                                       {"schedule", {{"steps", 1}}}});
  ASSERT_EQ(cmd_train(cfg, std::nullopt, out_, err_), kExitOk) << err_.str();
  EvalArgs a;
  a.checkpoint = *dir_ / "ds.ckpt";
  a.manifest = *manifest_;
  a.out = *dir_ / "eval_ck";
  ASSERT_EQ(cmd_eval(a, out_, err_), kExitOk) << err_.str();
  EXPECT_TRUE(fs::exists(a.out / "report.txt"));
  EXPECT_TRUE(fs::exists(a.out / "predictions" / "v03" / "2" / "synthetic-0.json"));

  // Re-scoring the saved predictions reproduces the report.
  EvalArgs b = a;
  b.checkpoint.reset();
  b.predictions = a.out / "predictions";
  b.out = *dir_ / "eval_pred";
  ASSERT_EQ(cmd_eval(b, out_, err_), kExitOk);
  EXPECT_EQ(slurp(a.out / "report.json"), slurp(b.out / "report.json"));
}

TEST_F(Commands, EvalOraclePredictionsAndGroups) {
  const DatasetManifest m = load_manifest(*manifest_);
  const Dataset ds = load_dataset(m);
  const fs::path preds = *dir_ / "oracle";
  for (const auto& [k, inst] : ds) {
    const auto gts = load_gt_masks(m, inst);
    for (auto mode : kAllPhraseModes) {
      if (mode == PhraseMode::kFull) {
        for (const auto& [pid, p] : inst.phrases) write_predictions(preds, inst, pid, gts);
      } else {
        write_predictions(preds, inst, to_string(mode), gts);
      }
    }
  }
  EvalArgs a;
  a.predictions = preds;
  a.manifest = *manifest_;
  a.phrase_modes = {"all"};
  a.group_by = {"difficulty", "category"};
  a.out = *dir_ / "eval_oracle";
  ASSERT_EQ(cmd_eval(a, out_, err_), kExitOk) << err_.str();
  const auto j = nlohmann::json::parse(slurp(a.out / "report.json"));
  for (const auto& [mode, r] : j["phrase_modes"].items()) {
    const auto& pp = r["per_phrase"];
    EXPECT_DOUBLE_EQ(pp["overall_iou"].get<double>(), 1.0) << mode;
    EXPECT_DOUBLE_EQ(pp["mean_jf"].get<double>(), 1.0) << mode;
    EXPECT_EQ(pp["groups"]["trivial"]["count"].get<int>() + pp["groups"]["non_trivial"]["count"].get<int>(),
              pp["count"].get<int>());
  }

  std::ostringstream txt, js;
  EXPECT_EQ(cmd_report(a.out, "txt", txt, err_), kExitOk);
  EXPECT_EQ(txt.str(), slurp(a.out / "report.txt"));
  EXPECT_EQ(cmd_report(a.out / "report.json", "json", js, err_), kExitOk);
  EXPECT_EQ(nlohmann::json::parse(js.str()), j);
  EXPECT_EQ(cmd_report(a.out, "xml", js, err_), kExitUsage);
}

TEST_F(Commands, EvalArgumentErrors) {
  EvalArgs a;
  a.manifest = *manifest_;
  a.out = *dir_ / "eval_err";
  EXPECT_EQ(cmd_eval(a, out_, err_), kExitUsage);  // neither source
  a.predictions = *dir_ / "nowhere";
  a.phrase_modes = {"verbose"};
  EXPECT_EQ(cmd_eval(a, out_, err_), kExitUsage);
  a.phrase_modes = {"full"};
  a.group_by = {"colour"};
  EXPECT_EQ(cmd_eval(a, out_, err_), kExitUsage);
}

TEST_F(Commands, AnalyzeWritesDistributionAndKappa) {
  const fs::path out = *dir_ / "analysis";
  ASSERT_EQ(cmd_analyze(*dir_ / "data" / "annotations.jsonl", out, KappaVariant::kFleiss, out_, err_), kExitOk)
      << err_.str();
  const auto j = nlohmann::json::parse(slurp(out / "analysis.json"));
  EXPECT_EQ(j["records"], 60);
  EXPECT_EQ(j["items"], 20);
  EXPECT_EQ(j["annotators"], 3);
  EXPECT_DOUBLE_EQ(j["difficulty"]["trivial"].get<double>(), 9.0 / 20.0);
  double total = 0;
  for (const auto& [k, v] : j["breakdown"].items()) total += v.get<double>();
  EXPECT_NEAR(total, 1.0, 1e-12);
  ASSERT_EQ(j["kappa"].size(), kNumCategories);
  EXPECT_TRUE(j["kappa"][index_of(SemanticCategory::kCategory)]["kappa"].is_null());
  EXPECT_DOUBLE_EQ(j["kappa"][index_of(SemanticCategory::kLocation)]["kappa"].get<double>(), 1.0);
  EXPECT_LT(j["kappa"][index_of(SemanticCategory::kAppearance)]["kappa"].get<double>(), 1.0);
  EXPECT_NE(slurp(out / "analysis.txt").find("undefined"), std::string::npos);
}

TEST_F(Commands, ValidatePairsExitCodes) {
  const fs::path ann = *dir_ / "pair_ann.jsonl";
  std::string lines;
  auto add = [&](const std::string& pid, std::initializer_list<SemanticCategory> cats) {
    for (const char* a : {"x", "y"}) {
      AnnotationRecord r;
      r.annotator_id = a;
      r.instance_id = "v:1";
      r.phrase_id = pid;
      for (auto c : cats) r.categories[index_of(c)] = true;
      lines += record_to_line(r);
    }
  };
  add("base", {SemanticCategory::kCategory, SemanticCategory::kMotion});
  add("still", {SemanticCategory::kCategory});
  write_text(ann, lines);
  const PairedRE good{"v:1", "base", "still", SemanticCategory::kMotion, false};
  PairedRE wrong = good;
  wrong.presence_in_variant = true;
  PairedRE ghost = good;
  ghost.variant_phrase_id = "ghost";

  write_text(*dir_ / "good.jsonl", to_json(good).dump() + "\n");
  EXPECT_EQ(cmd_validate_pairs(*dir_ / "good.jsonl", ann, out_, err_), kExitOk);
  std::ostringstream report;
  write_text(*dir_ / "bad.jsonl", to_json(good).dump() + "\n" + to_json(wrong).dump() + "\n" + to_json(ghost).dump());
  EXPECT_EQ(cmd_validate_pairs(*dir_ / "bad.jsonl", ann, report, err_), kExitValidation);
  EXPECT_NE(report.str().find("presence_mismatch"), std::string::npos);
  EXPECT_NE(report.str().find("1 of 3 pairs valid"), std::string::npos);
  write_text(*dir_ / "broken.jsonl", "{\"instance_id\": 1}\n");
  EXPECT_EQ(cmd_validate_pairs(*dir_ / "broken.jsonl", ann, out_, err_), kExitUsage);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(REFSEG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(Commands, BinaryExitCodes) {
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("eval --bogus"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("analyze --annotations " + (*dir_ / "data" / "annotations.jsonl").string() + " --out " +
                    (*dir_ / "cli_analysis").string()),
            0);
  EXPECT_EQ(run_cli("analyze --annotations " + (*dir_ / "nope.jsonl").string()), 2);
  const fs::path synth = *dir_ / "cli_synth";
  EXPECT_EQ(run_cli("make-synthetic --out " + synth.string()), 0);
  EXPECT_TRUE(fs::exists(synth / "manifest.json"));
}

}  // namespace
}  // namespace refseg
