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

// Referring-expression categorization: annotation records, majority voting,
// multi-rater agreement, dataset statistics, paired-expression checks and the
// reduced phrase variants used for ablations.

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <iosfwd>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "refseg/error.hpp"

namespace refseg {

enum class SemanticCategory { kAppearance, kCategory, kLocation, kMotion, kObjMotion, kStatic, kObjStatic };

inline constexpr std::size_t kNumCategories = 7;

inline constexpr std::array<SemanticCategory, kNumCategories> kAllCategories{
    SemanticCategory::kAppearance, SemanticCategory::kCategory, SemanticCategory::kLocation,
    SemanticCategory::kMotion,     SemanticCategory::kObjMotion, SemanticCategory::kStatic,
    SemanticCategory::kObjStatic};

inline constexpr std::array<const char*, kNumCategories> kCategoryNames{
    "appearance", "category", "location", "motion", "obj_motion", "static", "obj_static"};

inline std::size_t index_of(SemanticCategory c) { return static_cast<std::size_t>(c); }
inline std::string to_string(SemanticCategory c) { return kCategoryNames[index_of(c)]; }

inline std::optional<SemanticCategory> category_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kNumCategories; ++i)
    if (s == kCategoryNames[i]) return kAllCategories[i];
  return std::nullopt;
}

enum class Difficulty { kTrivial, kNonTrivial };
enum class Correctness { kValidRe, kNoRe, kWrongObject };
enum class Redundancy { kRedundant, kMinimal };

inline std::string to_string(Difficulty d) { return d == Difficulty::kTrivial ? "trivial" : "non_trivial"; }
inline std::string to_string(Correctness c) {
  switch (c) {
    case Correctness::kValidRe: return "valid_re";
    case Correctness::kNoRe: return "no_re";
    case Correctness::kWrongObject: return "wrong_object";
  }
  return "valid_re";
}
inline std::string to_string(Redundancy r) { return r == Redundancy::kRedundant ? "redundant" : "minimal"; }

using CategoryFlags = std::array<bool, kNumCategories>;

/// One annotator's labels for one (instance, phrase).
struct AnnotationRecord {
  std::string annotator_id;
  std::string instance_id;
  std::string phrase_id;
  Difficulty difficulty = Difficulty::kTrivial;
  Correctness correctness = Correctness::kValidRe;
  CategoryFlags categories{};
  Redundancy redundancy = Redundancy::kMinimal;
  std::string timestamp;

  bool has(SemanticCategory c) const { return categories[index_of(c)]; }
  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

// ------------------------------------------------------------ JSON records

inline nlohmann::ordered_json to_json(const AnnotationRecord& r) {
  nlohmann::ordered_json j;
  j["annotator_id"] = r.annotator_id;
  j["instance_id"] = r.instance_id;
  j["phrase_id"] = r.phrase_id;
  j["difficulty"] = to_string(r.difficulty);
  j["correctness"] = to_string(r.correctness);
  nlohmann::ordered_json cats;
  for (std::size_t i = 0; i < kNumCategories; ++i) cats[kCategoryNames[i]] = r.categories[i];
  j["categories"] = cats;
  j["redundancy"] = to_string(r.redundancy);
  j["timestamp"] = r.timestamp;
  return j;
}

/// Field-level problems with a candidate record; empty when valid.
inline std::vector<std::string> record_problems(const nlohmann::json& j) {
  std::vector<std::string> errs;
  if (!j.is_object()) return {"record must be a JSON object"};
  static const std::set<std::string> known{"annotator_id", "instance_id", "phrase_id",  "difficulty",
                                           "correctness",  "categories",  "redundancy", "timestamp"};
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) errs.push_back(k + ": unknown field");
  auto need_string = [&](const char* key, bool nonempty) {
    if (!j.contains(key)) {
      errs.push_back(std::string(key) + ": missing");
    } else if (!j[key].is_string()) {
      errs.push_back(std::string(key) + ": must be a string");
    } else if (nonempty && j[key].get<std::string>().empty()) {
      errs.push_back(std::string(key) + ": must not be empty");
    }
  };
  need_string("annotator_id", true);
  need_string("instance_id", true);
  need_string("phrase_id", true);
  auto need_enum = [&](const char* key, std::initializer_list<const char*> allowed) {
    if (!j.contains(key)) {
      errs.push_back(std::string(key) + ": missing");
      return;
    }
    const bool ok = j[key].is_string() &&
                    std::any_of(allowed.begin(), allowed.end(),
                                [&](const char* a) { return j[key].get<std::string>() == a; });
    if (!ok) {
      std::string msg = std::string(key) + ": must be one of";
      for (const char* a : allowed) msg += std::string(" ") + a;
      errs.push_back(msg);
    }
  };
  need_enum("difficulty", {"trivial", "non_trivial"});
  need_enum("correctness", {"valid_re", "no_re", "wrong_object"});
  need_enum("redundancy", {"redundant", "minimal"});
  if (j.contains("timestamp") && !j["timestamp"].is_string()) errs.push_back("timestamp: must be a string");
  if (!j.contains("categories")) {
    errs.push_back("categories: missing");
  } else if (!j["categories"].is_object()) {
    errs.push_back("categories: must be an object of 7 booleans");
  } else {
    const auto& c = j["categories"];
    for (const auto& [k, v] : c.items()) {
      if (!category_from_string(k)) errs.push_back("categories." + k + ": unknown category");
      else if (!v.is_boolean()) errs.push_back("categories." + k + ": must be a boolean");
    }
    for (const char* name : kCategoryNames)
      if (!c.contains(name)) errs.push_back(std::string("categories.") + name + ": missing");
  }
  return errs;
}

inline AnnotationRecord record_from_json(const nlohmann::json& j) {
  const auto errs = record_problems(j);
  if (!errs.empty()) {
    std::string msg;
    for (const auto& e : errs) msg += (msg.empty() ? "" : "; ") + e;
    fail(ErrorCode::kValidationError, msg);
  }
  AnnotationRecord r;
  r.annotator_id = j["annotator_id"].get<std::string>();
  r.instance_id = j["instance_id"].get<std::string>();
  r.phrase_id = j["phrase_id"].get<std::string>();
  const auto d = j["difficulty"].get<std::string>();
  r.difficulty = d == "trivial" ? Difficulty::kTrivial : Difficulty::kNonTrivial;
  const auto c = j["correctness"].get<std::string>();
  r.correctness = c == "valid_re" ? Correctness::kValidRe
                  : c == "no_re"  ? Correctness::kNoRe
                                  : Correctness::kWrongObject;
  r.redundancy = j["redundancy"].get<std::string>() == "redundant" ? Redundancy::kRedundant
                                                                   : Redundancy::kMinimal;
  for (std::size_t i = 0; i < kNumCategories; ++i) r.categories[i] = j["categories"][kCategoryNames[i]].get<bool>();
  if (j.contains("timestamp")) r.timestamp = j["timestamp"].get<std::string>();
  return r;
}

inline std::string record_to_line(const AnnotationRecord& r) { return to_json(r).dump() + "\n"; }

/// Parses JSON-Lines; blank lines are skipped. Errors name the 1-based line.
template <typename T, typename Parse>
std::vector<T> read_jsonl(std::istream& in, Parse parse) {
  std::vector<T> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParseError, "line " + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.code() == ErrorCode::kValidationError ? ErrorCode::kParseError : e.code(),
           "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<AnnotationRecord> read_records(std::istream& in) {
  return read_jsonl<AnnotationRecord>(in, [](const nlohmann::json& j) { return record_from_json(j); });
}

// ------------------------------------------------------------ difficulty

struct CatalogObject {
  std::string object_id;
  std::string class_label;
};

/// Every annotated object of every video, with its class label.
using VideoCatalog = std::map<std::string, std::vector<CatalogObject>>;

/// Non-trivial iff another annotated object in the same video shares the
/// referent's class. A video with a single annotated object is trivial.
inline Difficulty auto_difficulty(const std::string& video_id, const std::string& object_id,
                                  const VideoCatalog& catalog) {
  auto vit = catalog.find(video_id);
  if (vit == catalog.end()) fail(ErrorCode::kUnknownInstance, "video " + video_id + " not in catalog");
  const auto& objects = vit->second;
  auto self = std::find_if(objects.begin(), objects.end(),
                           [&](const CatalogObject& o) { return o.object_id == object_id; });
  if (self == objects.end()) {
    fail(ErrorCode::kUnknownInstance, "object " + object_id + " not in video " + video_id);
  }
  if (objects.size() == 1) return Difficulty::kTrivial;
  for (const auto& o : objects)
    if (o.object_id != object_id && o.class_label == self->class_label) return Difficulty::kNonTrivial;
  return Difficulty::kTrivial;
}

// ------------------------------------------------------------ voting

struct CategorySet {
  CategoryFlags flags{};
  std::array<int, kNumCategories> vote_counts{};
  int n_annotators = 0;

  bool has(SemanticCategory c) const { return flags[index_of(c)]; }
  friend bool operator==(const CategorySet&, const CategorySet&) = default;
};

/// A label survives when at least this many annotators assigned it.
inline constexpr int kMajorityVotes = 2;

inline CategorySet majority_vote(std::span<const AnnotationRecord> records) {
  if (records.size() < 2) fail(ErrorCode::kInvalidArgument, "majority vote needs at least two records");
  std::set<std::string> annotators;
  for (const auto& r : records) {
    if (r.instance_id != records[0].instance_id || r.phrase_id != records[0].phrase_id) {
      fail(ErrorCode::kMixedInstance, "records span more than one (instance, phrase)");
    }
    if (!annotators.insert(r.annotator_id).second) {
      fail(ErrorCode::kDuplicateAnnotator, "annotator " + r.annotator_id + " appears twice");
    }
  }
  CategorySet s;
  s.n_annotators = static_cast<int>(records.size());
  for (const auto& r : records)
    for (std::size_t i = 0; i < kNumCategories; ++i) s.vote_counts[i] += r.categories[i] ? 1 : 0;
  for (std::size_t i = 0; i < kNumCategories; ++i) s.flags[i] = s.vote_counts[i] >= kMajorityVotes;
  return s;
}

/// A single record taken at face value (items labeled by one annotator).
inline CategorySet single_vote(const AnnotationRecord& r) {
  CategorySet s;
  s.n_annotators = 1;
  s.flags = r.categories;
  for (std::size_t i = 0; i < kNumCategories; ++i) s.vote_counts[i] = r.categories[i] ? 1 : 0;
  return s;
}

/// Plurality label; ties resolve to the lowest enumerator.
template <typename E, std::size_t N>
E plurality(const std::array<int, N>& counts) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < N; ++i)
    if (counts[i] > counts[best]) best = i;
  return static_cast<E>(best);
}

struct VotedItem {
  std::string instance_id;
  std::string phrase_id;
  CategorySet categories;
  Difficulty difficulty = Difficulty::kTrivial;
  Correctness correctness = Correctness::kValidRe;
  Redundancy redundancy = Redundancy::kMinimal;
};

using PhraseKey = std::pair<std::string, std::string>;  // (instance_id, phrase_id)

inline std::map<PhraseKey, std::vector<AnnotationRecord>> group_records(
    std::span<const AnnotationRecord> records) {
  std::map<PhraseKey, std::vector<AnnotationRecord>> groups;
  for (const auto& r : records) groups[{r.instance_id, r.phrase_id}].push_back(r);
  return groups;
}

/// Voted labels for every (instance, phrase), sorted by key.
inline std::vector<VotedItem> aggregate(std::span<const AnnotationRecord> records) {
  std::vector<VotedItem> out;
  for (const auto& [key, recs] : group_records(records)) {
    VotedItem v{key.first, key.second, {}, {}, {}, {}};
    v.categories = recs.size() == 1 ? single_vote(recs[0]) : majority_vote(recs);
    std::array<int, 2> diff{};
    std::array<int, 3> corr{};
    std::array<int, 2> red{};
    for (const auto& r : recs) {
      ++diff[static_cast<std::size_t>(r.difficulty)];
      ++corr[static_cast<std::size_t>(r.correctness)];
      ++red[static_cast<std::size_t>(r.redundancy)];
    }
    v.difficulty = plurality<Difficulty>(diff);
    v.correctness = plurality<Correctness>(corr);
    v.redundancy = plurality<Redundancy>(red);
    out.push_back(std::move(v));
  }
  return out;
}

inline std::map<PhraseKey, CategorySet> voted_category_sets(std::span<const AnnotationRecord> records) {
  std::map<PhraseKey, CategorySet> out;
  for (const auto& v : aggregate(records)) out.emplace(PhraseKey{v.instance_id, v.phrase_id}, v.categories);
  return out;
}

// ------------------------------------------------------------ agreement

enum class KappaVariant {
  kFleiss,        // chance agreement from pooled label proportions
  kDaviesFleiss,  // chance agreement from per-rater marginals (raters are fixed)
};

/// Chance-corrected agreement over N items x n raters of binary labels
/// (labels[item][rater]). nullopt when chance agreement is 1 (a single label
/// used throughout), where kappa is undefined.
inline std::optional<double> fleiss_kappa(const std::vector<std::vector<bool>>& labels,
                                          KappaVariant variant = KappaVariant::kFleiss) {
  if (labels.empty()) fail(ErrorCode::kEmptyInput, "kappa over zero items");
  const std::size_t n = labels[0].size();
  for (const auto& row : labels)
    if (row.size() != n) fail(ErrorCode::kRaggedMatrix, "every item needs the same number of raters");
  if (n < 2) fail(ErrorCode::kRaggedMatrix, "kappa needs at least two raters per item");
  const double N = static_cast<double>(labels.size());
  const double nn = static_cast<double>(n);

  double p_bar = 0.0;
  double yes_total = 0.0;
  for (const auto& row : labels) {
    const double yes = static_cast<double>(std::count(row.begin(), row.end(), true));
    const double no = nn - yes;
    p_bar += (yes * (yes - 1.0) + no * (no - 1.0)) / (nn * (nn - 1.0));
    yes_total += yes;
  }
  p_bar /= N;

  double p_e = 0.0;
  if (variant == KappaVariant::kFleiss) {
    const double p_yes = yes_total / (N * nn);
    p_e = p_yes * p_yes + (1.0 - p_yes) * (1.0 - p_yes);
  } else {
    std::vector<double> rater_yes(n, 0.0);
    for (const auto& row : labels)
      for (std::size_t r = 0; r < n; ++r) rater_yes[r] += row[r] ? 1.0 : 0.0;
    for (int label = 0; label < 2; ++label) {
      double sum = 0.0, sum_sq = 0.0;
      for (double y : rater_yes) {
        const double p = label == 1 ? y / N : 1.0 - y / N;
        sum += p;
        sum_sq += p * p;
      }
      p_e += (sum * sum - sum_sq) / (nn * (nn - 1.0));
    }
  }
  if (p_e >= 1.0 - 1e-15) return std::nullopt;
  return (p_bar - p_e) / (1.0 - p_e);
}

struct CategoryKappa {
  SemanticCategory category;
  std::optional<double> kappa;
  std::size_t items = 0;  // items entering the statistic
  int raters = 0;
};

/// Per-category kappa over items labeled by the most common number of
/// annotators (at least two); rater columns are ordered by annotator id.
inline std::vector<CategoryKappa> category_kappas(std::span<const AnnotationRecord> records,
                                                  KappaVariant variant = KappaVariant::kFleiss) {
  const auto groups = group_records(records);
  std::map<std::size_t, std::size_t> by_size;
  for (const auto& [k, recs] : groups)
    if (recs.size() >= 2) ++by_size[recs.size()];
  std::vector<CategoryKappa> out;
  if (by_size.empty()) {
    for (auto c : kAllCategories) out.push_back({c, std::nullopt, 0, 0});
    return out;
  }
  const std::size_t raters =
      std::max_element(by_size.begin(), by_size.end(),
                       [](const auto& a, const auto& b) { return a.second < b.second; })
          ->first;
  for (auto c : kAllCategories) {
    std::vector<std::vector<bool>> m;
    for (const auto& [k, recs] : groups) {
      if (recs.size() != raters) continue;
      auto sorted = recs;
      std::sort(sorted.begin(), sorted.end(),
                [](const auto& a, const auto& b) { return a.annotator_id < b.annotator_id; });
      std::vector<bool> row;
      for (const auto& r : sorted) row.push_back(r.has(c));
      m.push_back(std::move(row));
    }
    out.push_back({c, fleiss_kappa(m, variant), m.size(), static_cast<int>(raters)});
  }
  return out;
}

// ------------------------------------------------------------ statistics

struct Distribution {
  std::size_t count = 0;
  std::array<double, kNumCategories> category{};
  double trivial = 0.0;
  double non_trivial = 0.0;
  double valid_re = 0.0;
  double no_re = 0.0;
  double wrong_object = 0.0;
  /// Difficulty for valid expressions, correctness class otherwise; sums to 1.
  std::map<std::string, double> breakdown;
  double redundancy_ratio = 0.0;
};

inline Distribution distribution(std::span<const VotedItem> items) {
  if (items.empty()) fail(ErrorCode::kEmptyInput, "distribution over zero items");
  Distribution d;
  d.count = items.size();
  const double n = static_cast<double>(items.size());
  std::map<std::string, std::size_t> parts{{"trivial", 0}, {"non_trivial", 0}, {"no_re", 0}, {"wrong_object", 0}};
  std::size_t redundant = 0;
  for (const auto& it : items) {
    for (std::size_t i = 0; i < kNumCategories; ++i) d.category[i] += it.categories.flags[i] ? 1.0 : 0.0;
    (it.difficulty == Difficulty::kTrivial ? d.trivial : d.non_trivial) += 1.0;
    switch (it.correctness) {
      case Correctness::kValidRe: d.valid_re += 1.0; break;
      case Correctness::kNoRe: d.no_re += 1.0; break;
      case Correctness::kWrongObject: d.wrong_object += 1.0; break;
    }
    ++parts[it.correctness == Correctness::kValidRe ? to_string(it.difficulty) : to_string(it.correctness)];
    redundant += it.redundancy == Redundancy::kRedundant;
  }
  for (auto& v : d.category) v /= n;
  d.trivial /= n;
  d.non_trivial /= n;
  d.valid_re /= n;
  d.no_re /= n;
  d.wrong_object /= n;
  for (const auto& [k, c] : parts) d.breakdown[k] = static_cast<double>(c) / n;
  d.redundancy_ratio = static_cast<double>(redundant) / n;
  return d;
}

// ------------------------------------------------------------ paired expressions

/// A variant phrase that adds or removes exactly one category of its base.
struct PairedRE {
  std::string instance_id;
  std::string base_phrase_id;
  std::string variant_phrase_id;
  SemanticCategory toggled_category = SemanticCategory::kAppearance;
  bool presence_in_variant = false;
};

inline nlohmann::ordered_json to_json(const PairedRE& p) {
  return {{"instance_id", p.instance_id},
          {"base_phrase_id", p.base_phrase_id},
          {"variant_phrase_id", p.variant_phrase_id},
          {"toggled_category", to_string(p.toggled_category)},
          {"presence_in_variant", p.presence_in_variant}};
}

inline PairedRE paired_re_from_json(const nlohmann::json& j) {
  PairedRE p;
  try {
    p.instance_id = j.at("instance_id").get<std::string>();
    p.base_phrase_id = j.at("base_phrase_id").get<std::string>();
    p.variant_phrase_id = j.at("variant_phrase_id").get<std::string>();
    const auto cat = j.at("toggled_category").get<std::string>();
    const auto c = category_from_string(cat);
    if (!c) fail(ErrorCode::kParseError, "unknown toggled_category '" + cat + "'");
    p.toggled_category = *c;
    p.presence_in_variant = j.at("presence_in_variant").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("paired RE: ") + e.what());
  }
  return p;
}

inline std::vector<PairedRE> read_pairs(std::istream& in) {
  return read_jsonl<PairedRE>(in, [](const nlohmann::json& j) { return paired_re_from_json(j); });
}

enum class PairViolationReason {
  kForbiddenToggle,        // `category` is never toggled
  kCategoryAbsent,         // the noun category must be present in both phrases
  kNoDifference,
  kMultipleDifferences,
  kWrongCategoryToggled,   // exactly one category differs, but not the declared one
  kPresenceMismatch,       // the variant's flag contradicts presence_in_variant
};

inline std::string to_string(PairViolationReason r) {
  switch (r) {
    case PairViolationReason::kForbiddenToggle: return "forbidden_toggle";
    case PairViolationReason::kCategoryAbsent: return "category_absent";
    case PairViolationReason::kNoDifference: return "no_difference";
    case PairViolationReason::kMultipleDifferences: return "multiple_differences";
    case PairViolationReason::kWrongCategoryToggled: return "wrong_category_toggled";
    case PairViolationReason::kPresenceMismatch: return "presence_mismatch";
  }
  return "unknown";
}

struct PairViolation {
  PairViolationReason reason;
  std::string detail;
};

struct PairValidation {
  std::vector<PairViolation> violations;
  bool ok() const { return violations.empty(); }
  bool has(PairViolationReason r) const {
    return std::any_of(violations.begin(), violations.end(),
                       [r](const PairViolation& v) { return v.reason == r; });
  }
};

inline PairValidation validate_pair(const PairedRE& pair, const std::map<PhraseKey, CategorySet>& voted) {
  auto lookup = [&](const std::string& phrase) -> const CategorySet& {
    auto it = voted.find({pair.instance_id, phrase});
    if (it == voted.end()) {
      fail(ErrorCode::kMissingCategorySet, "no voted categories for " + pair.instance_id + "/" + phrase);
    }
    return it->second;
  };
  const CategorySet& base = lookup(pair.base_phrase_id);
  const CategorySet& variant = lookup(pair.variant_phrase_id);
  PairValidation v;
  if (pair.toggled_category == SemanticCategory::kCategory) {
    v.violations.push_back({PairViolationReason::kForbiddenToggle, "the category label is never toggled"});
  }
  if (!base.has(SemanticCategory::kCategory) || !variant.has(SemanticCategory::kCategory)) {
    v.violations.push_back({PairViolationReason::kCategoryAbsent, "both phrases must name the referent's category"});
  }
  std::vector<SemanticCategory> differing;
  for (auto c : kAllCategories)
    if (base.has(c) != variant.has(c)) differing.push_back(c);
  if (differing.empty()) {
    v.violations.push_back({PairViolationReason::kNoDifference, "base and variant carry identical categories"});
  } else if (differing.size() > 1) {
    std::string d = "differ in";
    for (auto c : differing) d += " " + to_string(c);
    v.violations.push_back({PairViolationReason::kMultipleDifferences, d});
  } else if (differing[0] != pair.toggled_category) {
    v.violations.push_back({PairViolationReason::kWrongCategoryToggled,
                            "phrases differ in " + to_string(differing[0]) + ", declared " +
                                to_string(pair.toggled_category)});
  }
  if (variant.has(pair.toggled_category) != pair.presence_in_variant) {
    v.violations.push_back({PairViolationReason::kPresenceMismatch,
                            "variant " + std::string(variant.has(pair.toggled_category) ? "has" : "lacks") +
                                " " + to_string(pair.toggled_category)});
  }
  return v;
}

// ------------------------------------------------------------ phrase variants

enum class PhraseMode { kGeneric, kActor, kAction, kActorAction, kFull };

inline constexpr std::array<PhraseMode, 5> kAllPhraseModes{
    PhraseMode::kGeneric, PhraseMode::kActor, PhraseMode::kAction, PhraseMode::kActorAction,
    PhraseMode::kFull};

inline std::string to_string(PhraseMode m) {
  switch (m) {
    case PhraseMode::kGeneric: return "generic";
    case PhraseMode::kActor: return "actor";
    case PhraseMode::kAction: return "action";
    case PhraseMode::kActorAction: return "actor_action";
    case PhraseMode::kFull: return "full";
  }
  return "full";
}

inline PhraseMode phrase_mode_from_string(const std::string& s) {
  for (auto m : kAllPhraseModes)
    if (to_string(m) == s) return m;
  fail(ErrorCode::kConfigError, "unknown phrase mode '" + s + "'");
}

/// Row label used in rendered tables.
inline std::string display_name(PhraseMode m) {
  switch (m) {
    case PhraseMode::kGeneric: return "Generic";
    case PhraseMode::kActor: return "Only Actor";
    case PhraseMode::kAction: return "Only Action";
    case PhraseMode::kActorAction: return "Actor + Action";
    case PhraseMode::kFull: return "Full phrase";
  }
  return "";
}

inline constexpr const char* kGenericPhrase = "thing";

struct PhraseMeta {
  std::string actor;
  std::string action;
  std::string full_phrase;
};

inline std::string phrase_variant(const PhraseMeta& meta, PhraseMode mode) {
  auto need = [](const std::string& v, const char* field) {
    if (v.empty()) fail(ErrorCode::kMissingField, std::string(field) + " is required for this phrase mode");
  };
  switch (mode) {
    case PhraseMode::kGeneric: return kGenericPhrase;
    case PhraseMode::kActor: need(meta.actor, "actor"); return meta.actor;
    case PhraseMode::kAction: need(meta.action, "action"); return meta.action;
    case PhraseMode::kActorAction:
      need(meta.actor, "actor");
      need(meta.action, "action");
      return meta.actor + " " + meta.action;
    case PhraseMode::kFull: need(meta.full_phrase, "full_phrase"); return meta.full_phrase;
  }
  return meta.full_phrase;
}

/// Presence/absence labels for the four categories the category breakdown reports.
inline const std::vector<std::pair<SemanticCategory, std::string>>& breakdown_categories() {
  static const std::vector<std::pair<SemanticCategory, std::string>> c{
      {SemanticCategory::kAppearance, "App"},
      {SemanticCategory::kLocation, "Loc"},
      {SemanticCategory::kMotion, "Motion"},
      {SemanticCategory::kStatic, "Static"}};
  return c;
}

inline std::vector<std::string> category_group_labels(const CategorySet& s) {
  std::vector<std::string> out;
  for (const auto& [c, short_name] : breakdown_categories()) out.push_back((s.has(c) ? "+" : "-") + short_name);
  return out;
}

}  // namespace refseg
