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

#include <csignal>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "refseg/annotation_service.hpp"
#include "refseg/commands.hpp"
#include "refseg/synthetic_dataset.hpp"

namespace {

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

std::set<std::string> split_csv(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.insert(item);
  return out;
}

int serve(const std::string& host, int port, const std::string& store_dir, const std::string& manifest,
          const std::string& annotators) {
  return refseg::guarded(std::cerr, [&] {
    const auto m = refseg::load_manifest(manifest);
    refseg::AnnotationStore store(store_dir);
    refseg::AnnotationService svc(m, refseg::build_tasks(m, refseg::load_dataset(m)), store, split_csv(annotators));
    httplib::Server server;
    refseg::install_routes(server, svc);
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    std::cout << "serving annotation tasks on http://" << host << ":" << port << std::endl;
    if (!server.listen(host, port)) refseg::fail(refseg::ErrorCode::kIoError, "cannot listen on port " + std::to_string(port));
    g_server = nullptr;
    return refseg::kExitOk;
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"refseg: language-guided segmentation, evaluation and annotation tooling"};
  app.require_subcommand(1);
  int rc = 0;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  std::string train_config;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_config, "training config JSON")->required();
  train->add_option("--seed", train_seed, "override the config seed");
  train->callback([&] { rc = refseg::cmd_train(train_config, train_seed, std::cout, std::cerr); });

  auto* eval = app.add_subcommand("eval", "score predictions or a checkpoint on a manifest");
  refseg::EvalArgs ea;
  std::string ea_ckpt, ea_pred, ea_manifest, ea_out = "eval_out";
  std::optional<int> ea_tol;
  auto* ck_opt = eval->add_option("--checkpoint", ea_ckpt, "model checkpoint");
  eval->add_option("--predictions", ea_pred, "directory of RLE prediction files")->excludes(ck_opt);
  eval->add_option("--manifest", ea_manifest, "dataset manifest JSON")->required();
  eval->add_option("--phrase-mode", ea.phrase_modes, "generic, actor, action, actor_action, full or all")
      ->delimiter(',');
  eval->add_option("--group-by", ea.group_by, "difficulty and/or category")->delimiter(',');
  eval->add_option("--out", ea_out, "output directory");
  eval->add_option("--tolerance", ea_tol, "contour tolerance in pixels (default from image diagonal)");
  eval->callback([&] {
    if (!ea_ckpt.empty()) ea.checkpoint = ea_ckpt;
    if (!ea_pred.empty()) ea.predictions = ea_pred;
    ea.manifest = ea_manifest;
    ea.out = ea_out;
    ea.tolerance = ea_tol;
    rc = refseg::cmd_eval(ea, std::cout, std::cerr);
  });

  auto* analyze = app.add_subcommand("analyze", "annotation statistics and agreement");
  std::string an_file, an_out = "analysis_out", an_kappa = "fleiss";
  analyze->add_option("--annotations", an_file, "annotation JSONL")->required();
  analyze->add_option("--out", an_out, "output directory");
  analyze->add_option("--kappa", an_kappa, "fleiss or davies_fleiss")
      ->check(CLI::IsMember({"fleiss", "davies_fleiss"}));
  analyze->callback([&] {
    const auto v = an_kappa == "fleiss" ? refseg::KappaVariant::kFleiss : refseg::KappaVariant::kDaviesFleiss;
    rc = refseg::cmd_analyze(an_file, an_out, v, std::cout, std::cerr);
  });

  auto* vp = app.add_subcommand("validate-pairs", "check paired expressions against voted categories");
  std::string vp_pairs, vp_ann;
  vp->add_option("--pairs", vp_pairs, "paired expression JSONL")->required();
  vp->add_option("--annotations", vp_ann, "annotation JSONL")->required();
  vp->callback([&] { rc = refseg::cmd_validate_pairs(vp_pairs, vp_ann, std::cout, std::cerr); });

  auto* sv = app.add_subcommand("serve-annot", "run the annotation backend");
  int sv_port = 8080;
  std::string sv_host = "127.0.0.1", sv_store, sv_manifest, sv_annotators;
  sv->add_option("--port", sv_port, "TCP port");
  sv->add_option("--host", sv_host, "bind address");
  sv->add_option("--store", sv_store, "journal directory")->required();
  sv->add_option("--manifest", sv_manifest, "dataset manifest JSON")->required();
  sv->add_option("--annotators", sv_annotators, "comma-separated annotator ids (default: any)");
  sv->callback([&] { rc = serve(sv_host, sv_port, sv_store, sv_manifest, sv_annotators); });

  auto* rep = app.add_subcommand("report", "render a stored evaluation report");
  std::string rep_in, rep_format = "txt";
  rep->add_option("--in", rep_in, "eval output directory or report.json")->required();
  rep->add_option("--format", rep_format, "json or txt")->check(CLI::IsMember({"json", "txt"}));
  rep->callback([&] { rc = refseg::cmd_report(rep_in, rep_format, std::cout, std::cerr); });

  auto* mk = app.add_subcommand("make-synthetic", "write the built-in 20-object demo dataset");
  std::string mk_out;
  mk->add_option("--out", mk_out, "output directory")->required();
  mk->callback([&] {
    rc = refseg::guarded(std::cerr, [&] {
      std::cout << refseg::synthetic::write_dataset(mk_out).string() << "\n";
      return refseg::kExitOk;
    });
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : refseg::kExitUsage;
  }
  return rc;
}
