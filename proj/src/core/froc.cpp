/*=========================================================================
 *
 *  Copyright 2026 The lungfpr Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *         https://www.apache.org/licenses/LICENSE-2.0.txt
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 *
 *=========================================================================*/

#include "froc.hpp"

#include "error.hpp"
#include "text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

namespace lungfpr {

namespace {

double distance(const Vec3& a, const Vec3& b)
{
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

using CandidateKey = std::tuple<std::string, double, double, double, double, double>;

CandidateKey key_of(const NoduleCandidate& c)
{
  return {c.scan_id, c.center_mm[0], c.center_mm[1], c.center_mm[2], c.diameter_mm, c.score};
}

} // namespace

std::vector<std::size_t> matching_order(const std::vector<NoduleCandidate>& c)
{
  std::vector<std::size_t> order(c.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (c[i].score != c[j].score)
      return c[i].score > c[j].score;
    return std::tie(c[i].center_mm, c[i].scan_id) < std::tie(c[j].center_mm, c[j].scan_id);
  });
  return order;
}

MatchResult match_candidates(const std::vector<NoduleCandidate>& cands, const std::vector<GroundTruthNodule>& gt)
{
  MatchResult r;
  r.outcomes.assign(cands.size(), CandidateOutcome::FalsePositive);
  r.matched_gt.assign(cands.size(), -1);
  r.detected.assign(gt.size(), false);

  std::map<std::string_view, std::vector<std::size_t>> gt_by_scan;
  for (std::size_t g = 0; g < gt.size(); ++g)
    gt_by_scan[gt[g].scan_id].push_back(g);

  for (auto i : matching_order(cands)) {
    const auto it = gt_by_scan.find(cands[i].scan_id);
    if (it == gt_by_scan.end())
      continue;
    std::ptrdiff_t best_free = -1, any_hit = -1;
    double best_d = 0.0;
    for (auto g : it->second) {
      const double d = distance(cands[i].center_mm, gt[g].center_mm);
      if (d > gt[g].diameter_mm / 2.0)
        continue;
      if (any_hit < 0)
        any_hit = static_cast<std::ptrdiff_t>(g);
      if (!r.detected[g] && (best_free < 0 || d < best_d)) {
        best_free = static_cast<std::ptrdiff_t>(g);
        best_d = d;
      }
    }
    if (best_free >= 0) {
      r.detected[best_free] = true;
      r.outcomes[i] = CandidateOutcome::TruePositive;
      r.matched_gt[i] = best_free;
    } else if (any_hit >= 0) {
      r.outcomes[i] = CandidateOutcome::DuplicateHit;
      r.matched_gt[i] = any_hit;
    }
  }
  return r;
}

FrocReport froc(const std::vector<NoduleCandidate>& cands, const std::vector<GroundTruthNodule>& gt,
                std::size_t scan_count)
{
  if (scan_count < 1)
    fail(ErrorKind::InvalidArgument, "FROC needs at least one scan");
  if (gt.empty())
    fail(ErrorKind::UndefinedMetric, "sensitivity is undefined without ground-truth nodules");

  FrocReport rep;
  rep.scan_count = scan_count;
  rep.ground_truth_count = gt.size();

  // A candidate's outcome depends only on candidates ahead of it in matching
  // order, so one global match serves every threshold.
  const auto m = match_candidates(cands, gt);
  const auto order = matching_order(cands);
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto i = order[k];
    if (m.outcomes[i] == CandidateOutcome::TruePositive)
      ++tp;
    else if (m.outcomes[i] == CandidateOutcome::FalsePositive)
      ++fp;
    const bool last_of_score = k + 1 == order.size() || cands[order[k + 1]].score != cands[i].score;
    if (!last_of_score)
      continue;
    OperatingPoint p;
    p.threshold = cands[i].score;
    p.true_positives = tp;
    p.false_positives = fp;
    p.fps_per_scan = static_cast<double>(fp) / static_cast<double>(scan_count);
    p.sensitivity = static_cast<double>(tp) / static_cast<double>(gt.size());
    rep.operating_points.push_back(p);
  }

  for (std::size_t l = 0; l < kFrocLevels.size(); ++l) {
    double best = 0.0;
    for (const auto& p : rep.operating_points)
      if (p.fps_per_scan <= kFrocLevels[l])
        best = std::max(best, p.sensitivity);
    rep.level_sensitivities[l] = best;
  }
  rep.cpm = cpm(rep.level_sensitivities);
  return rep;
}

double cpm(std::span<const double> levels)
{
  if (levels.size() != kFrocLevels.size())
    fail(ErrorKind::InvalidArgument, "CPM needs exactly 7 level sensitivities, got " + std::to_string(levels.size()));
  double sum = 0.0;
  for (double v : levels) {
    if (!(v >= 0.0 && v <= 1.0))
      fail(ErrorKind::Validation, "level sensitivity " + text::format_double(v) + " is outside [0, 1]");
    sum += v;
  }
  return sum / static_cast<double>(levels.size());
}

CpmCheck check_reported_cpm(std::span<const double> levels, double reported, double tolerance)
{
  CpmCheck c;
  c.computed = cpm(levels);
  c.reported = reported;
  c.discrepancy = std::abs(c.computed - reported) > tolerance;
  return c;
}

SensSpec sensitivity_specificity(std::size_t tp, std::size_t fn, std::size_t tn, std::size_t fp)
{
  if (tp + fn == 0)
    fail(ErrorKind::UndefinedMetric, "sensitivity is undefined when tp + fn = 0");
  if (tn + fp == 0)
    fail(ErrorKind::UndefinedMetric, "specificity is undefined when tn + fp = 0");
  return {static_cast<double>(tp) / static_cast<double>(tp + fn), static_cast<double>(tn) / static_cast<double>(tn + fp)};
}

double round_half_even(double value, int decimals)
{
  const double scale = std::pow(10.0, decimals);
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(value * scale) / scale;
  std::fesetround(saved);
  return r;
}

FpReduction fp_reduction_report(const std::vector<NoduleCandidate>& before, const std::vector<NoduleCandidate>& after,
                                const std::vector<GroundTruthNodule>& gt, double threshold)
{
  std::map<CandidateKey, std::size_t> pool;
  for (const auto& c : before)
    ++pool[key_of(c)];
  for (const auto& c : after) {
    auto it = pool.find(key_of(c));
    if (it == pool.end() || it->second == 0)
      fail(ErrorKind::Identity, "candidate in scan '" + c.scan_id + "' at (" + text::format_double(c.center_mm[0]) +
                                    ", " + text::format_double(c.center_mm[1]) + ", " +
                                    text::format_double(c.center_mm[2]) + ") is not part of the 'before' set");
    --it->second;
  }

  const auto count = [&](const std::vector<NoduleCandidate>& cs, std::size_t& tp, std::size_t& fp) {
    std::vector<NoduleCandidate> kept;
    std::copy_if(cs.begin(), cs.end(), std::back_inserter(kept), [&](const auto& c) { return c.score >= threshold; });
    const auto m = match_candidates(kept, gt);
    tp = static_cast<std::size_t>(std::count(m.outcomes.begin(), m.outcomes.end(), CandidateOutcome::TruePositive));
    fp = static_cast<std::size_t>(std::count(m.outcomes.begin(), m.outcomes.end(), CandidateOutcome::FalsePositive));
  };

  FpReduction r;
  r.score_threshold = threshold;
  count(before, r.tp_before, r.fp_before);
  count(after, r.tp_after, r.fp_after);
  if (!gt.empty()) {
    r.sensitivity_before = static_cast<double>(r.tp_before) / static_cast<double>(gt.size());
    r.sensitivity_after = static_cast<double>(r.tp_after) / static_cast<double>(gt.size());
  }
  if (r.fp_before > 0)
    r.reduction_percent = 100.0 * (1.0 - static_cast<double>(r.fp_after) / static_cast<double>(r.fp_before));
  r.reduction_percent_rounded = round_half_even(r.reduction_percent, 1);
  return r;
}

std::string format_froc_csv(const FrocReport& rep)
{
  std::string out = "threshold,fps_per_scan,sensitivity\n";
  for (const auto& p : rep.operating_points)
    out += text::format_double(p.threshold) + "," + text::format_double(p.fps_per_scan) + "," +
           text::format_double(p.sensitivity) + "\n";
  return out;
}

std::string format_froc_json(const FrocReport& rep)
{
  nlohmann::ordered_json j;
  j["fp_levels"] = kFrocLevels;
  j["level_sensitivities"] = rep.level_sensitivities;
  j["cpm"] = rep.cpm;
  j["scan_count"] = rep.scan_count;
  j["ground_truth_count"] = rep.ground_truth_count;
  j["operating_point_count"] = rep.operating_points.size();
  j["level_reading"] = "stepwise";
  j["hit_rule"] = "center distance <= ground-truth radius";
  return j.dump(2) + "\n";
}

std::string format_froc_curve(const FrocReport& rep)
{
  std::string out = "# fps_per_scan sensitivity\n0 0\n";
  for (const auto& p : rep.operating_points)
    out += text::format_double(p.fps_per_scan) + " " + text::format_double(p.sensitivity) + "\n";
  return out;
}

std::string format_fp_reduction_json(const FpReduction& r)
{
  nlohmann::ordered_json j;
  j["score_threshold"] = r.score_threshold;
  j["fp_before"] = r.fp_before;
  j["fp_after"] = r.fp_after;
  j["tp_before"] = r.tp_before;
  j["tp_after"] = r.tp_after;
  j["sensitivity_before"] = r.sensitivity_before;
  j["sensitivity_after"] = r.sensitivity_after;
  j["fp_reduction_percent"] = r.reduction_percent;
  j["fp_reduction_percent_rounded"] = r.reduction_percent_rounded;
  return j.dump(2) + "\n";
}

} // namespace lungfpr
