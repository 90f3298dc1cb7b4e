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

#include "pipeline.hpp"

#include "error.hpp"
#include "fileio.hpp"
#include "text.hpp"
#include "volume_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <set>
#include <thread>

namespace lungfpr {

namespace {

constexpr std::size_t kPredictChunk = 32;

struct ScanOutput {
  std::vector<NoduleCandidate> raw, before;
  std::vector<double> p_nodule;
};

ScanOutput process_scan(const ScanRef& scan, const std::vector<NoduleCandidate>* supplied, const Hs2Model& model,
                        const PipelineConfig& cfg)
{
  const CtVolume volume = load_mhd(scan.mhd_path);
  ScanOutput out;
  if (supplied)
    out.raw = *supplied;
  else
    out.raw = detect_blobs(volume, scan.scan_id, cfg.blobs);

  const FrameLookup frames{{scan.scan_id, volume.frame()}};
  out.before = dedup_candidates(threshold_candidates(out.raw, cfg.min_score), frames, cfg.nms_iou);

  out.p_nodule.reserve(out.before.size());
  for (std::size_t start = 0; start < out.before.size(); start += kPredictChunk) {
    const std::size_t end = std::min(out.before.size(), start + kPredictChunk);
    std::vector<std::vector<float>> images;
    for (std::size_t i = start; i < end; ++i)
      images.push_back(lhi_for_candidate(volume, out.before[i], cfg.lhi).normalized());
    std::vector<std::span<const float>> views(images.begin(), images.end());
    for (const auto& p : model.forward_batch(views))
      out.p_nodule.push_back(p.p_nodule);
  }
  return out;
}

} // namespace

std::vector<ScanRef> list_scans(const std::filesystem::path& dir)
{
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec))
    fail(ErrorKind::Io, "scan directory '" + dir.string() + "' does not exist");
  std::vector<ScanRef> scans;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".mhd")
      scans.push_back({e.path().stem().string(), e.path()});
  std::sort(scans.begin(), scans.end(), [](const auto& a, const auto& b) { return a.scan_id < b.scan_id; });
  return scans;
}

void PipelineConfig::validate() const
{
  if (!(min_score >= 0.0 && min_score <= 1.0))
    fail(ErrorKind::Config, "min score must be within [0, 1]");
  if (!(nms_iou >= 0.0 && nms_iou <= 1.0))
    fail(ErrorKind::Config, "NMS IoU threshold must be within [0, 1]");
  if (!(keep_threshold >= 0.0 && keep_threshold <= 1.0))
    fail(ErrorKind::Config, "keep threshold must be within [0, 1]");
  if (jobs < 1)
    fail(ErrorKind::Config, "jobs must be >= 1");
  if (!(blobs.min_diameter_mm < blobs.max_diameter_mm))
    fail(ErrorKind::Config, "blob min diameter must be below max diameter");
  lhi.validate();
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn)
{
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), count);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t)
      pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e)
      std::rethrow_exception(e);
}

PipelineResult run_pipeline(const std::vector<ScanRef>& scans, const std::optional<std::vector<NoduleCandidate>>& candidates,
                            const std::vector<GroundTruthNodule>& gt, const Hs2Model& model, const PipelineConfig& cfg)
{
  cfg.validate();
  if (scans.empty())
    fail(ErrorKind::InvalidArgument, "pipeline needs at least one scan");
  if (model.architecture().input_size != cfg.lhi.out_size)
    fail(ErrorKind::Config, "model input size " + std::to_string(model.architecture().input_size) +
                                " does not match LHI output size " + std::to_string(cfg.lhi.out_size));

  std::vector<ScanRef> sorted = scans;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.scan_id < b.scan_id; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].scan_id == sorted[i - 1].scan_id)
      fail(ErrorKind::InvalidArgument, "duplicate scan id '" + sorted[i].scan_id + "'");

  std::vector<std::vector<NoduleCandidate>> per_scan(sorted.size());
  if (candidates) {
    std::map<std::string_view, std::size_t> slot;
    for (std::size_t i = 0; i < sorted.size(); ++i)
      slot[sorted[i].scan_id] = i;
    for (const auto& c : *candidates) {
      const auto it = slot.find(c.scan_id);
      if (it == slot.end())
        fail(ErrorKind::Frame, "candidate references scan '" + c.scan_id + "' which has no volume");
      per_scan[it->second].push_back(c);
    }
  }

  std::vector<ScanOutput> outs(sorted.size());
  parallel_for(sorted.size(), cfg.jobs, [&](std::size_t i) {
    outs[i] = process_scan(sorted[i], candidates ? &per_scan[i] : nullptr, model, cfg);
  });

  PipelineResult r;
  r.scan_count = sorted.size();
  for (auto& o : outs) {
    r.raw.insert(r.raw.end(), o.raw.begin(), o.raw.end());
    for (std::size_t k = 0; k < o.before.size(); ++k) {
      const bool kept = o.p_nodule[k] >= cfg.keep_threshold;
      r.before.push_back(o.before[k]);
      r.predictions.push_back({o.before[k], o.p_nodule[k], kept});
      if (kept)
        r.after.push_back(o.before[k]);
    }
  }

  r.candidate_accuracy = std::numeric_limits<double>::quiet_NaN();
  if (!gt.empty()) {
    std::set<std::string_view> known;
    for (const auto& s : sorted)
      known.insert(s.scan_id);
    std::vector<GroundTruthNodule> scoped;
    for (const auto& g : gt)
      if (known.count(g.scan_id))
        scoped.push_back(g);
    if (!scoped.empty()) {
      r.froc_before = froc(r.before, scoped, r.scan_count);
      r.froc_after = froc(r.after, scoped, r.scan_count);
      r.fp_report = fp_reduction_report(r.before, r.after, scoped, 0.0);
      if (!r.before.empty()) {
        const auto m = match_candidates(r.before, scoped);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < r.before.size(); ++i) {
          const bool is_nodule = m.outcomes[i] != CandidateOutcome::FalsePositive;
          correct += is_nodule == r.predictions[i].kept ? 1 : 0;
        }
        r.candidate_accuracy = static_cast<double>(correct) / static_cast<double>(r.before.size());
      }
    }
  }
  return r;
}

std::string format_predictions_csv(const std::vector<CandidatePrediction>& preds)
{
  std::string out = "seriesuid,coordX,coordY,coordZ,diameter_mm,probability,p_nodule,kept\n";
  for (const auto& p : preds) {
    const auto& c = p.candidate;
    out += c.scan_id + "," + text::format_double(c.center_mm[0]) + "," + text::format_double(c.center_mm[1]) + "," +
           text::format_double(c.center_mm[2]) + "," + text::format_double(c.diameter_mm) + "," +
           text::format_double(c.score) + "," + text::format_double(p.p_nodule) + "," + (p.kept ? "1" : "0") + "\n";
  }
  return out;
}

std::vector<std::string> write_pipeline_outputs(const PipelineResult& r, const std::filesystem::path& dir)
{
  ensure_directory(dir);
  std::vector<std::string> files;
  const auto put = [&](const std::string& name, const std::string& body) {
    write_text_file(dir / name, body);
    files.push_back(name);
  };
  put("candidates_raw.csv", format_candidates_csv(r.raw));
  put("candidates_before.csv", format_candidates_csv(r.before));
  put("candidates_after.csv", format_candidates_csv(r.after));
  put("predictions.csv", format_predictions_csv(r.predictions));
  if (r.froc_before && r.froc_after) {
    put("froc_before.csv", format_froc_csv(*r.froc_before));
    put("froc_before.json", format_froc_json(*r.froc_before));
    put("froc_before.dat", format_froc_curve(*r.froc_before));
    put("froc_after.csv", format_froc_csv(*r.froc_after));
    put("froc_after.json", format_froc_json(*r.froc_after));
    put("froc_after.dat", format_froc_curve(*r.froc_after));
  }
  if (r.fp_report) {
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(format_fp_reduction_json(*r.fp_report));
    j["scan_count"] = r.scan_count;
    j["candidates_before"] = r.before.size();
    j["candidates_after"] = r.after.size();
    if (std::isfinite(r.candidate_accuracy))
      j["candidate_accuracy"] = r.candidate_accuracy;
    put("fp_report.json", j.dump(2) + "\n");
  }
  return files;
}

} // namespace lungfpr
