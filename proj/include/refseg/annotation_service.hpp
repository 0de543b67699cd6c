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

// Annotation backend: the task catalog derived from a dataset, an
// append-only record journal with an in-memory latest index, and the HTTP
// routes that expose both.
//
// Journal line: {"version":N,"submitted_at":"...","record":{...}}. The
// journal is replayed on open, so the latest index survives restarts.

#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "refseg/dataset.hpp"
#include "refseg/mask.hpp"
#include "refseg/taxonomy.hpp"

namespace refseg {

// ------------------------------------------------------------ tasks

struct Question {
  std::string key;
  std::string text;
  std::vector<std::string> answers;
};

/// Fixed checklist: one yes/no question per category in category order,
/// then the three per-phrase judgements.
inline const std::vector<Question>& annotation_questions() {
  static const std::vector<Question> q{
      {"appearance", "Does the phrase describe how the object looks (colour, shape, size, clothing)?", {"yes", "no"}},
      {"category", "Does the phrase name what kind of object it is?", {"yes", "no"}},
      {"location", "Does the phrase say where the object is in the frame or scene?", {"yes", "no"}},
      {"motion", "Does the phrase say how the object moves?", {"yes", "no"}},
      {"obj_motion", "Does the phrase relate the object's motion to another object?", {"yes", "no"}},
      {"static", "Does the phrase describe a still action or pose of the object?", {"yes", "no"}},
      {"obj_static", "Does the phrase relate a still action of the object to another object?", {"yes", "no"}},
      {"difficulty", "Is another object of the same class annotated in this video?", {"trivial", "non_trivial"}},
      {"correctness", "Does the phrase pick out exactly the boxed object?", {"valid_re", "no_re", "wrong_object"}},
      {"redundancy", "Does the phrase say more than needed to single the object out?", {"redundant", "minimal"}},
  };
  return q;
}

struct AnnotationTask {
  std::string id;  // "<instance_id>/<phrase_id>"
  std::string instance_id;
  std::string phrase_id;
  std::string phrase;
  std::vector<std::string> frames;
  std::vector<std::optional<Box>> boxes;  // nullopt where the referent is absent
};

inline nlohmann::ordered_json to_json(const AnnotationTask& t, bool full) {
  nlohmann::ordered_json j{{"id", t.id}, {"instance_id", t.instance_id}, {"phrase_id", t.phrase_id},
                           {"phrase", t.phrase}, {"num_frames", t.frames.size()}};
  if (!full) return j;
  j["frames"] = t.frames;
  j["boxes"] = nlohmann::ordered_json::array();
  for (const auto& b : t.boxes) {
    if (b) j["boxes"].push_back({{"x0", b->x0}, {"y0", b->y0}, {"x1", b->x1}, {"y1", b->y1}});
    else j["boxes"].push_back(nullptr);
  }
  j["questions"] = nlohmann::ordered_json::array();
  for (const auto& q : annotation_questions())
    j["questions"].push_back({{"key", q.key}, {"text", q.text}, {"answers", q.answers}});
  return j;
}

/// One task per (instance, phrase), boxes taken from the ground truth.
inline std::vector<AnnotationTask> build_tasks(const DatasetManifest& m, const Dataset& d) {
  std::vector<AnnotationTask> out;
  for (const auto& [key, inst] : d) {
    std::vector<std::optional<Box>> boxes;
    for (const auto& mask : load_gt_masks(m, inst)) boxes.push_back(bounding_box(mask));
    for (const auto& [pid, phrase] : inst.phrases)
      out.push_back({inst.id() + "/" + pid, inst.id(), pid, phrase.text, inst.frames, boxes});
  }
  return out;
}

// ------------------------------------------------------------ store

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

struct StoredRecord {
  int version = 0;
  std::string submitted_at;
  AnnotationRecord record;
};

/// (instance_id, phrase_id, annotator_id): export order.
using RecordKey = std::tuple<std::string, std::string, std::string>;

inline RecordKey record_key(const AnnotationRecord& r) { return {r.instance_id, r.phrase_id, r.annotator_id}; }

struct StoreSnapshot {
  std::map<RecordKey, StoredRecord> latest;
};

struct Disagreement {
  std::string instance_id;
  std::string phrase_id;
  SemanticCategory category;
  int yes = 0;
  int no = 0;
};

class AnnotationStore {
 public:
  /// Opens (or creates) the journal under `dir` and replays it.
  explicit AnnotationStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) fail(ErrorCode::kIoError, "cannot create store " + dir_.string());
    auto snap = std::make_shared<StoreSnapshot>();
    std::ifstream in(journal_path());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        StoredRecord s{j.at("version").get<int>(), j.at("submitted_at").get<std::string>(),
                       record_from_json(j.at("record"))};
        snap->latest[record_key(s.record)] = std::move(s);
      } catch (const std::exception& e) {
        fail(ErrorCode::kParseError, journal_path().string() + " line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    journal_.open(journal_path(), std::ios::app);
    if (!journal_) fail(ErrorCode::kIoError, "cannot append to " + journal_path().string());
    std::atomic_store(&snapshot_, std::shared_ptr<const StoreSnapshot>(std::move(snap)));
  }

  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  std::filesystem::path journal_path() const { return dir_ / "journal.jsonl"; }

  std::shared_ptr<const StoreSnapshot> snapshot() const { return std::atomic_load(&snapshot_); }

  /// Appends a new version for the record's key and returns it (1 for the
  /// first submission of a key).
  StoredRecord submit(AnnotationRecord r) {
    std::lock_guard<std::mutex> lock(write_mu_);
    auto current = snapshot();
    auto next = std::make_shared<StoreSnapshot>(*current);
    const RecordKey key = record_key(r);
    auto it = current->latest.find(key);
    StoredRecord s{it == current->latest.end() ? 1 : it->second.version + 1, utc_now(), std::move(r)};
    if (s.record.timestamp.empty()) s.record.timestamp = s.submitted_at;
    nlohmann::ordered_json line{{"version", s.version}, {"submitted_at", s.submitted_at}, {"record", to_json(s.record)}};
    journal_ << line.dump() << "\n";
    journal_.flush();
    if (!journal_) fail(ErrorCode::kIoError, "journal write failed");
    next->latest[key] = s;
    std::atomic_store(&snapshot_, std::shared_ptr<const StoreSnapshot>(std::move(next)));
    return s;
  }

  std::vector<AnnotationRecord> latest_records() const {
    std::vector<AnnotationRecord> out;
    for (const auto& [k, s] : snapshot()->latest) out.push_back(s.record);
    return out;
  }

  /// Latest record per key as JSON-Lines, sorted by (instance, phrase, annotator).
  std::string export_jsonl() const {
    std::string out;
    for (const auto& [k, s] : snapshot()->latest) out += record_to_line(s.record);
    return out;
  }

  /// Categories on which the latest records of an item differ. Items with
  /// fewer than two annotators are skipped.
  std::vector<Disagreement> disagreements() const {
    std::vector<Disagreement> out;
    for (const auto& [key, recs] : group_records(latest_records())) {
      if (recs.size() < 2) continue;
      for (auto c : kAllCategories) {
        int yes = 0;
        for (const auto& r : recs) yes += r.has(c);
        const int no = static_cast<int>(recs.size()) - yes;
        if (yes > 0 && no > 0) out.push_back({key.first, key.second, c, yes, no});
      }
    }
    return out;
  }

 private:
  std::filesystem::path dir_;
  std::mutex write_mu_;
  std::ofstream journal_;
  std::shared_ptr<const StoreSnapshot> snapshot_;
};

// ------------------------------------------------------------ service

class AnnotationService {
 public:
  AnnotationService(DatasetManifest manifest, std::vector<AnnotationTask> tasks, AnnotationStore& store,
                    std::set<std::string> annotators)
      : manifest_(std::move(manifest)), tasks_(std::move(tasks)), store_(store), annotators_(std::move(annotators)) {
    for (std::size_t i = 0; i < tasks_.size(); ++i) index_.emplace(tasks_[i].id, i);
  }

  /// Empty when the service accepts any annotator id.
  const std::set<std::string>& annotators() const { return annotators_; }

  bool known_annotator(const std::string& a) const { return annotators_.empty() || annotators_.count(a) > 0; }

  std::vector<const AnnotationTask*> list_tasks(const std::string& annotator, bool unlabeled_only) const {
    if (!known_annotator(annotator)) fail(ErrorCode::kUnknownAnnotator, "unknown annotator '" + annotator + "'");
    const auto snap = store_.snapshot();
    std::vector<const AnnotationTask*> out;
    for (const auto& t : tasks_) {
      if (unlabeled_only && snap->latest.count({t.instance_id, t.phrase_id, annotator})) continue;
      out.push_back(&t);
    }
    return out;
  }

  const AnnotationTask& task(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) fail(ErrorCode::kNotFound, "no task " + id);
    return tasks_[it->second];
  }

  /// Field-level problems: schema first, then references to unknown tasks
  /// or annotators.
  std::vector<std::string> problems(const nlohmann::json& j) const {
    auto errs = record_problems(j);
    if (!errs.empty()) return errs;
    const auto r = record_from_json(j);
    if (!known_annotator(r.annotator_id)) errs.push_back("annotator_id: unknown annotator");
    if (!index_.count(r.instance_id + "/" + r.phrase_id)) errs.push_back("phrase_id: no task for this instance and phrase");
    return errs;
  }

  StoredRecord submit(const nlohmann::json& j) {
    const auto errs = problems(j);
    if (!errs.empty()) {
      std::string msg;
      for (const auto& e : errs) msg += (msg.empty() ? "" : "; ") + e;
      fail(ErrorCode::kValidationError, msg);
    }
    return store_.submit(record_from_json(j));
  }

  /// PNG bytes of the idx-th frame (0-based) of a video.
  std::string frame_bytes(const std::string& video, int idx) const {
    if (video.find("..") != std::string::npos || video.find('/') != std::string::npos)
      fail(ErrorCode::kNotFound, "bad video id");
    const auto dir = manifest_.frames / video;
    if (!std::filesystem::is_directory(dir)) fail(ErrorCode::kNotFound, "no video " + video);
    const auto frames = list_frames(dir);
    if (idx < 0 || idx >= static_cast<int>(frames.size())) fail(ErrorCode::kNotFound, "no frame " + std::to_string(idx));
    std::ifstream in(dir / (frames[idx] + ".png"), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  AnnotationStore& store() { return store_; }
  const AnnotationStore& store() const { return store_; }

 private:
  DatasetManifest manifest_;
  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> index_;
  AnnotationStore& store_;
  std::set<std::string> annotators_;
};

// ------------------------------------------------------------ HTTP

inline void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& j) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& msg,
                       const std::vector<std::string>& fields = {}) {
  nlohmann::ordered_json j{{"error", msg}};
  if (!fields.empty()) j["fields"] = fields;
  send_json(res, status, j);
}

/// Registers every route on `server`. The service must outlive it.
inline void install_routes(httplib::Server& server, AnnotationService& svc) {
  server.Get("/tasks", [&svc](const httplib::Request& req, httplib::Response& res) {
    std::string annotator = req.get_param_value("annotator");
    if (annotator.empty()) annotator = req.get_header_value("X-Annotator");
    if (annotator.empty()) return send_error(res, 400, "annotator is required");
    const std::string u = req.get_param_value("unlabeled");
    const bool unlabeled = u == "1" || u == "true" || u == "yes";
    try {
      nlohmann::ordered_json arr = nlohmann::ordered_json::array();
      for (const auto* t : svc.list_tasks(annotator, unlabeled)) arr.push_back(to_json(*t, false));
      send_json(res, 200, arr);
    } catch (const Error& e) {
      send_error(res, 404, e.what());
    }
  });
  server.Get(R"(/tasks/(.+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    try {
      send_json(res, 200, to_json(svc.task(req.matches[1]), true));
    } catch (const Error& e) {
      send_error(res, 404, e.what());
    }
  });
  server.Get(R"(/frames/([^/]+)/(\d+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(svc.frame_bytes(req.matches[1], std::stoi(req.matches[2])), "image/png");
    } catch (const Error& e) {
      send_error(res, 404, e.what());
    } catch (const std::out_of_range&) {
      send_error(res, 404, "no such frame");
    }
  });
  server.Post("/annotations", [&svc](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      return send_error(res, 400, std::string("body is not JSON: ") + e.what());
    }
    const auto errs = svc.problems(j);
    if (!errs.empty()) return send_error(res, 400, "validation failed", errs);
    try {
      const auto s = svc.submit(j);
      send_json(res, 201, {{"version", s.version}, {"submitted_at", s.submitted_at}});
    } catch (const Error& e) {
      send_error(res, e.code() == ErrorCode::kValidationError ? 400 : 500, e.what());
    }
  });
  server.Get("/export", [&svc](const httplib::Request&, httplib::Response& res) {
    res.set_content(svc.store().export_jsonl(), "application/x-ndjson");
  });
  server.Get("/disagreements", [&svc](const httplib::Request&, httplib::Response& res) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& d : svc.store().disagreements())
      arr.push_back({{"instance_id", d.instance_id}, {"phrase_id", d.phrase_id},
                     {"category", to_string(d.category)}, {"yes", d.yes}, {"no", d.no}});
    send_json(res, 200, arr);
  });
}

}  // namespace refseg
