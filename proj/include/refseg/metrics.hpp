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

// Segmentation evaluation measures: region similarity J, contour accuracy F,
// J&F, dataset-pooled (overall) IoU, per-instance mean IoU and Precision@K.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "refseg/error.hpp"
#include "refseg/mask.hpp"

namespace refseg {

inline const std::vector<double>& default_thresholds() {
  static const std::vector<double> t{0.5, 0.6, 0.7, 0.8, 0.9};
  return t;
}

/// Matching radius for F: ceil(0.8% of the image diagonal), at least 1 pixel.
inline int default_tolerance(int height, int width) {
  const double diag = std::sqrt(static_cast<double>(height) * height +
                                static_cast<double>(width) * width);
  return std::max(1, static_cast<int>(std::ceil(0.008 * diag)));
}

inline double region_j(const Mask& pred, const Mask& gt) { return iou(pred, gt); }

struct BoundaryMatch {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

inline BoundaryMatch boundary_match(const Mask& pred, const Mask& gt, int tolerance) {
  require_same_shape(pred, gt);
  if (tolerance < 0) fail(ErrorCode::kInvalidArgument, "tolerance must be non-negative");
  const Mask bp = boundary(pred);
  const Mask bg = boundary(gt);
  const std::size_t np = bp.count();
  const std::size_t ng = bg.count();
  if (np == 0 && ng == 0) return {1.0, 1.0, 1.0};
  if (np == 0 || ng == 0) return {0.0, 0.0, 0.0};

  const Mask gt_zone = dilate(bg, tolerance);
  const Mask pred_zone = dilate(bp, tolerance);
  std::size_t matched_pred = 0;
  std::size_t matched_gt = 0;
  for (std::size_t i = 0; i < bp.size(); ++i) {
    matched_pred += (bp[i] && gt_zone[i]);
    matched_gt += (bg[i] && pred_zone[i]);
  }
  BoundaryMatch m;
  m.precision = static_cast<double>(matched_pred) / static_cast<double>(np);
  m.recall = static_cast<double>(matched_gt) / static_cast<double>(ng);
  const double denom = m.precision + m.recall;
  m.f = denom == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / denom;
  return m;
}

inline double contour_f(const Mask& pred, const Mask& gt, int tolerance) {
  return boundary_match(pred, gt, tolerance).f;
}

struct FrameScore {
  double j = 0.0;
  double f = 0.0;
};

struct JfScore {
  double mean_j = 0.0;
  double mean_f = 0.0;
  double jf = 0.0;
};

inline JfScore jf_from_frames(std::span<const FrameScore> frames) {
  if (frames.empty()) fail(ErrorCode::kEmptySequence, "J&F over zero frames");
  JfScore s;
  for (const auto& fs : frames) {
    s.mean_j += fs.j;
    s.mean_f += fs.f;
  }
  s.mean_j /= static_cast<double>(frames.size());
  s.mean_f /= static_cast<double>(frames.size());
  s.jf = 0.5 * (s.mean_j + s.mean_f);
  return s;
}

inline std::vector<FrameScore> frame_scores(std::span<const Mask> preds, std::span<const Mask> gts,
                                            int tolerance) {
  if (preds.size() != gts.size()) {
    fail(ErrorCode::kLengthMismatch, std::to_string(preds.size()) + " predictions vs " +
                                         std::to_string(gts.size()) + " ground-truth frames");
  }
  if (preds.empty()) fail(ErrorCode::kEmptySequence, "instance has no frames");
  std::vector<FrameScore> out;
  out.reserve(preds.size());
  for (std::size_t t = 0; t < preds.size(); ++t) {
    out.push_back({region_j(preds[t], gts[t]), contour_f(preds[t], gts[t], tolerance)});
  }
  return out;
}

inline JfScore jf_instance(std::span<const Mask> preds, std::span<const Mask> gts, int tolerance) {
  const auto frames = frame_scores(preds, gts, tolerance);
  return jf_from_frames(frames);
}

using MaskPair = std::pair<Mask, Mask>;  // (prediction, ground truth)

inline double overall_iou(std::span<const MaskPair> pairs) {
  if (pairs.empty()) fail(ErrorCode::kEmptySequence, "overall IoU over zero pairs");
  Overlap pooled;
  for (const auto& [pred, gt] : pairs) pooled += overlap(pred, gt);
  return pooled.ratio();
}

/// Frames of one instance are pooled, then instances are averaged unweighted.
/// `instance_of[i]` names the instance pair i belongs to.
inline double mean_iou(std::span<const MaskPair> pairs, std::span<const std::string> instance_of) {
  if (pairs.empty()) fail(ErrorCode::kEmptySequence, "mean IoU over zero pairs");
  if (pairs.size() != instance_of.size()) {
    fail(ErrorCode::kLengthMismatch, "grouping must label every pair");
  }
  std::map<std::string, Overlap> pooled;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    pooled[instance_of[i]] += overlap(pairs[i].first, pairs[i].second);
  double sum = 0.0;
  for (const auto& [id, o] : pooled) sum += o.ratio();
  return sum / static_cast<double>(pooled.size());
}

/// Fraction of instances whose IoU is strictly above each threshold.
inline std::map<double, double> precision_at(std::span<const double> instance_ious,
                                             std::span<const double> thresholds) {
  if (instance_ious.empty()) fail(ErrorCode::kEmptyList, "precision over zero instances");
  std::map<double, double> out;
  for (double k : thresholds) {
    if (!(k > 0.0 && k < 1.0)) {
      fail(ErrorCode::kInvalidArgument, "precision threshold must lie in (0,1)");
    }
    std::size_t hits = 0;
    for (double v : instance_ious) hits += (v > k);
    out[k] = static_cast<double>(hits) / static_cast<double>(instance_ious.size());
  }
  return out;
}

/// Everything needed to score one evaluated unit (an instance under one phrase).
struct InstanceResult {
  std::string id;
  std::vector<FrameScore> frames;
  Overlap pooled;
};

inline InstanceResult score_instance(std::string id, std::span<const Mask> preds,
                                     std::span<const Mask> gts, int tolerance) {
  InstanceResult r;
  r.id = std::move(id);
  r.frames = frame_scores(preds, gts, tolerance);
  for (std::size_t t = 0; t < preds.size(); ++t) r.pooled += overlap(preds[t], gts[t]);
  return r;
}

struct InstanceScore {
  double mean_j = 0.0;
  double mean_f = 0.0;
  double jf = 0.0;
  double iou = 0.0;
  std::size_t frames = 0;
};

struct EvalReport {
  std::map<std::string, InstanceScore> per_instance;
  double overall_iou = 0.0;
  double mean_iou = 0.0;
  double mean_jf = 0.0;
  std::map<double, double> precision_at;
  std::map<std::string, EvalReport> groups;

  std::size_t count() const { return per_instance.size(); }
};

inline EvalReport build_report(std::span<const InstanceResult> results,
                               std::span<const double> thresholds = default_thresholds()) {
  if (results.empty()) fail(ErrorCode::kEmptySequence, "report over zero instances");
  EvalReport rep;
  Overlap pooled;
  std::vector<double> ious;
  ious.reserve(results.size());
  double jf_sum = 0.0;
  for (const auto& r : results) {
    const JfScore s = jf_from_frames(r.frames);
    const double instance_iou = r.pooled.ratio();
    rep.per_instance[r.id] = {s.mean_j, s.mean_f, s.jf, instance_iou, r.frames.size()};
    pooled += r.pooled;
    ious.push_back(instance_iou);
    jf_sum += s.jf;
  }
  rep.overall_iou = pooled.ratio();
  double iou_sum = 0.0;
  for (double v : ious) iou_sum += v;
  rep.mean_iou = iou_sum / static_cast<double>(ious.size());
  rep.mean_jf = jf_sum / static_cast<double>(results.size());
  rep.precision_at = precision_at(ious, thresholds);
  return rep;
}

/// Top-level report over all results plus one sub-report per label the
/// grouping function assigns. A result may belong to any number of groups;
/// labels with no members do not appear.
inline EvalReport grouped_report(
    std::span<const InstanceResult> results,
    const std::function<std::vector<std::string>(const InstanceResult&)>& group_fn,
    std::span<const double> thresholds = default_thresholds()) {
  EvalReport rep = build_report(results, thresholds);
  std::map<std::string, std::vector<InstanceResult>> members;
  for (const auto& r : results) {
    const auto labels = group_fn(r);
    for (const auto& label : std::set<std::string>(labels.begin(), labels.end()))
      members[label].push_back(r);
  }
  for (const auto& [label, rs] : members)
    if (!rs.empty()) rep.groups.emplace(label, build_report(rs, thresholds));
  return rep;
}

}  // namespace refseg
