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

// EvalReport serialization and plain-text table rendering. Ratios are kept
// at full precision in JSON and printed as percentages with one decimal.

#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "refseg/metrics.hpp"
#include "refseg/taxonomy.hpp"

namespace refseg {

inline std::string threshold_key(double k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", k);
  return buf;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["count"] = r.count();
  j["overall_iou"] = r.overall_iou;
  j["mean_iou"] = r.mean_iou;
  j["mean_jf"] = r.mean_jf;
  j["precision_at"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.precision_at) j["precision_at"][threshold_key(k)] = v;
  j["per_instance"] = nlohmann::ordered_json::object();
  for (const auto& [id, s] : r.per_instance) {
    j["per_instance"][id] = {{"mean_j", s.mean_j}, {"mean_f", s.mean_f}, {"jf", s.jf},
                             {"iou", s.iou},       {"frames", s.frames}};
  }
  if (!r.groups.empty()) {
    j["groups"] = nlohmann::ordered_json::object();
    for (const auto& [label, g] : r.groups) j["groups"][label] = to_json(g);
  }
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.overall_iou = j.at("overall_iou").get<double>();
    r.mean_iou = j.at("mean_iou").get<double>();
    r.mean_jf = j.at("mean_jf").get<double>();
    for (const auto& [k, v] : j.at("precision_at").items()) r.precision_at[std::stod(k)] = v.get<double>();
    for (const auto& [id, s] : j.at("per_instance").items()) {
      r.per_instance[id] = {s.at("mean_j").get<double>(), s.at("mean_f").get<double>(), s.at("jf").get<double>(),
                            s.at("iou").get<double>(), s.at("frames").get<std::size_t>()};
    }
    if (j.contains("groups"))
      for (const auto& [label, g] : j["groups"].items()) r.groups[label] = eval_report_from_json(g);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParseError, std::string("report: ") + e.what());
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::kParseError, "report: bad threshold key");
  }
  return r;
}

/// 0.675 -> "67.5"
inline std::string pct(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", ratio * 100.0);
  return buf;
}

inline std::string pct(const std::optional<double>& ratio) { return ratio ? pct(*ratio) : "n/a"; }

// ------------------------------------------------------------ text tables

/// Minimal column-aligned table: the first column is left-aligned, the
/// rest right-aligned. A "|" cell is rendered as a bare separator.
class TextTable {
 public:
  void add_row(std::vector<std::string> cells) { rows_.push_back(std::move(cells)); }
  void add_rule() { rows_.push_back({}); }

  std::string str() const {
    std::vector<std::size_t> widths;
    for (const auto& r : rows_) {
      if (r.size() > widths.size()) widths.resize(r.size(), 0);
      for (std::size_t i = 0; i < r.size(); ++i) widths[i] = std::max(widths[i], r[i].size());
    }
    std::size_t total = 0;
    for (auto w : widths) total += w + 2;
    std::ostringstream out;
    for (const auto& r : rows_) {
      if (r.empty()) {
        out << std::string(total > 2 ? total - 2 : 0, '-') << "\n";
        continue;
      }
      std::string line;
      for (std::size_t i = 0; i < r.size(); ++i) {
        const std::string pad(widths[i] - r[i].size(), ' ');
        line += i == 0 ? r[i] + pad : pad + r[i];
        if (i + 1 < r.size()) line += "  ";
      }
      while (!line.empty() && line.back() == ' ') line.pop_back();
      out << line << "\n";
    }
    return out.str();
  }

 private:
  std::vector<std::vector<std::string>> rows_;
};

inline std::optional<double> precision_value(const EvalReport& r, double k) {
  auto it = r.precision_at.find(k);
  if (it == r.precision_at.end()) return std::nullopt;
  return it->second;
}

/// Precision at 0.5 and 0.9 plus overall and mean IoU, one row per model.
inline std::string render_precision_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  TextTable t;
  t.add_row({"", "Prec", "", "|", "IoU", "", ""});
  t.add_row({"", "Prec @0.5", "@0.9", "|", "Overall", "|", "Mean"});
  t.add_rule();
  for (const auto& [name, r] : rows)
    t.add_row({name, pct(precision_value(r, 0.5)), pct(precision_value(r, 0.9)), "|", pct(r.overall_iou), "|",
               pct(r.mean_iou)});
  return t.str();
}

inline const std::vector<std::string>& category_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c;
    for (const auto& [cat, short_name] : breakdown_categories()) {
      c.push_back("+" + short_name);
      c.push_back("-" + short_name);
    }
    return c;
  }();
  return cols;
}

/// Mean IoU per category presence/absence group. Groups with no members
/// print "n/a".
inline std::string render_category_table(const EvalReport& r) {
  TextTable t;
  std::vector<std::string> header{""};
  std::vector<std::string> row{"Mean IoU"};
  for (const auto& label : category_columns()) {
    header.push_back(label);
    auto it = r.groups.find(label);
    row.push_back(it == r.groups.end() ? "n/a" : pct(it->second.mean_iou));
  }
  t.add_row(header);
  t.add_rule();
  t.add_row(row);
  return t.str();
}

/// Overall and mean IoU on the trivial / non-trivial / all splits, one row
/// per phrase mode.
inline std::string render_phrase_mode_table(const std::vector<std::pair<PhraseMode, EvalReport>>& rows) {
  auto split = [](const EvalReport& r, const std::string& label, bool overall) -> std::string {
    auto it = r.groups.find(label);
    if (it == r.groups.end()) return "n/a";
    return pct(overall ? it->second.overall_iou : it->second.mean_iou);
  };
  TextTable t;
  t.add_row({"", "Overall IoU", "", "", "|", "Mean IoU", "", ""});
  t.add_row({"", "Trivial", "Non-Trivial", "All", "|", "Trivial", "Non-Trivial", "All"});
  t.add_rule();
  for (const auto& [mode, r] : rows) {
    t.add_row({display_name(mode), split(r, "trivial", true), split(r, "non_trivial", true), pct(r.overall_iou), "|",
               split(r, "trivial", false), split(r, "non_trivial", false), pct(r.mean_iou)});
  }
  return t.str();
}

inline std::string render_jf_line(const std::string& label, const EvalReport& r) {
  double mj = 0.0, mf = 0.0;
  for (const auto& [id, s] : r.per_instance) {
    mj += s.mean_j;
    mf += s.mean_f;
  }
  const double n = static_cast<double>(std::max<std::size_t>(r.count(), 1));
  return label + ": J " + pct(mj / n) + "  F " + pct(mf / n) + "  J&F " + pct(r.mean_jf) + "  (" +
         std::to_string(r.count()) + " evaluated)\n";
}

}  // namespace refseg
