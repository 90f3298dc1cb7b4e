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
#include "froc.hpp"
#include "hs2.hpp"
#include "lhi.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lungfpr {

struct ScanRef {
  std::string scan_id;
  std::filesystem::path mhd_path;
};

/// Scans of a directory: every *.mhd file, scan id = file stem, sorted by id.
std::vector<ScanRef> list_scans(const std::filesystem::path& dir);

struct PipelineConfig {
  double min_score = kDefaultMinScore;
  double nms_iou = kDefaultNmsIou;
  LhiParams lhi;
  BlobParams blobs;
  /// A candidate survives HS2 when p_nodule >= keep_threshold.
  double keep_threshold = 0.5;
  int jobs = 1;

  void validate() const;
};

struct CandidatePrediction {
  NoduleCandidate candidate;
  double p_nodule = 0.0;
  bool kept = false;
};

struct PipelineResult {
  std::vector<NoduleCandidate> raw;    // detector output
  std::vector<NoduleCandidate> before; // thresholded + NMS
  std::vector<CandidatePrediction> predictions;
  std::vector<NoduleCandidate> after;  // HS2 survivors
  std::optional<FrocReport> froc_before, froc_after;
  std::optional<FpReduction> fp_report;
  /// Candidate-level HS2 accuracy against ground-truth hits; NaN without GT.
  double candidate_accuracy = 0.0;
  std::size_t scan_count = 0;
};

/// threshold -> per-scan NMS -> LHI -> HS2. Candidates come from `candidates`
/// when given, otherwise from the blob detector. Scans are processed in
/// parallel (config.jobs) and merged in scan-id order.
PipelineResult run_pipeline(const std::vector<ScanRef>& scans, const std::optional<std::vector<NoduleCandidate>>& candidates,
                            const std::vector<GroundTruthNodule>& ground_truth, const Hs2Model& model,
                            const PipelineConfig& config);

/// Writes the result files into `dir` and returns their names.
std::vector<std::string> write_pipeline_outputs(const PipelineResult& result, const std::filesystem::path& dir);

std::string format_predictions_csv(const std::vector<CandidatePrediction>& predictions);

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. The first
/// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

} // namespace lungfpr
