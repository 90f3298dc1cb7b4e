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

#pragma once

#include "candidates.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace lungfpr {

inline constexpr std::array<double, 7> kFrocLevels{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

enum class CandidateOutcome { TruePositive, FalsePositive, DuplicateHit };

struct MatchResult {
  std::vector<CandidateOutcome> outcomes; // per candidate, input order
  std::vector<std::ptrdiff_t> matched_gt; // GT index hit by the candidate, -1 for FP
  std::vector<bool> detected;             // per ground-truth nodule
};

/// Order in which candidates claim ground truth: descending score, then
/// lexicographic (x, y, z) center, then scan id, then input position.
std::vector<std::size_t> matching_order(const std::vector<NoduleCandidate>& candidates);

/// A candidate hits a nodule of the same scan when their centers are at most
/// one radius apart. The first hit claims the nodule (TP); a candidate whose
/// hits are all claimed already is a duplicate, neither TP nor FP. When one
/// candidate hits several unclaimed nodules it claims the nearest.
MatchResult match_candidates(const std::vector<NoduleCandidate>& candidates,
                             const std::vector<GroundTruthNodule>& ground_truth);

struct OperatingPoint {
  double threshold = 0.0; // candidates with score >= threshold are counted
  double fps_per_scan = 0.0;
  double sensitivity = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
};

struct FrocReport {
  std::vector<OperatingPoint> operating_points; // descending threshold
  std::array<double, 7> level_sensitivities{};
  double cpm = 0.0;
  std::size_t scan_count = 0;
  std::size_t ground_truth_count = 0;
};

/// Sweeps every distinct score. A level's sensitivity is the best one reached
/// at or below that many FPs per scan (stepwise reading, no interpolation).
FrocReport froc(const std::vector<NoduleCandidate>& candidates, const std::vector<GroundTruthNodule>& ground_truth,
                std::size_t scan_count);

double cpm(std::span<const double> level_sensitivities);

struct CpmCheck {
  double computed = 0.0;
  double reported = 0.0;
  bool discrepancy = false;
};

/// Recomputes a published CPM from its level sensitivities and flags a
/// mismatch beyond `tolerance`.
CpmCheck check_reported_cpm(std::span<const double> level_sensitivities, double reported, double tolerance = 0.0005);

struct SensSpec {
  double sensitivity = 0.0;
  double specificity = 0.0;
};

SensSpec sensitivity_specificity(std::size_t tp, std::size_t fn, std::size_t tn, std::size_t fp);

struct FpReduction {
  std::size_t fp_before = 0;
  std::size_t fp_after = 0;
  std::size_t tp_before = 0;
  std::size_t tp_after = 0;
  double sensitivity_before = 0.0;
  double sensitivity_after = 0.0;
  double reduction_percent = 0.0;         // unrounded
  double reduction_percent_rounded = 0.0; // one decimal, round-half-even
  double score_threshold = 0.0;
};

/// `after` must be a sub-multiset of `before`. Only candidates with
/// score >= score_threshold are counted.
FpReduction fp_reduction_report(const std::vector<NoduleCandidate>& before, const std::vector<NoduleCandidate>& after,
                                const std::vector<GroundTruthNodule>& ground_truth, double score_threshold = 0.0);

double round_half_even(double value, int decimals);

std::string format_froc_csv(const FrocReport& report);
std::string format_froc_json(const FrocReport& report);
/// Two whitespace-separated columns (fps_per_scan sensitivity) for plotting.
std::string format_froc_curve(const FrocReport& report);
std::string format_fp_reduction_json(const FpReduction& r);

} // namespace lungfpr
