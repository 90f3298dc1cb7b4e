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

#include "error.hpp"
#include "froc.hpp"
#include "froc_instances.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace lungfpr;

namespace {

void check_against_oracle(const fixtures::FrocInstance& in)
{
  const auto rep = froc(in.candidates, in.ground_truth, in.scans);
  const auto ref = oracle::froc(in.candidates, in.ground_truth, in.scans);
  REQUIRE(rep.operating_points.size() == ref.points.size());
  for (std::size_t i = 0; i < ref.points.size(); ++i) {
    CHECK(rep.operating_points[i].threshold == ref.points[i].threshold);
    CHECK(rep.operating_points[i].fps_per_scan == ref.points[i].fps);
    CHECK(rep.operating_points[i].sensitivity == ref.points[i].sensitivity);
  }
  CHECK(rep.level_sensitivities == ref.levels);
  CHECK(rep.cpm == ref.cpm);
}

} // namespace

TEST_CASE("hit rule")
{
  const std::vector<GroundTruthNodule> gt{{"s", {0, 0, 0}, 10}};
  auto m = match_candidates({{"s", {0, 0, 0}, 5, 0.5}}, gt);
  CHECK(m.outcomes[0] == CandidateOutcome::TruePositive);
  m = match_candidates({{"s", {5.001, 0, 0}, 5, 0.5}}, gt);
  CHECK(m.outcomes[0] == CandidateOutcome::FalsePositive);
  m = match_candidates({{"s", {1, 0, 0}, 5, 0.4}, {"s", {-1, 0, 0}, 5, 0.6}}, gt);
  CHECK(m.outcomes[1] == CandidateOutcome::TruePositive);
  CHECK(m.outcomes[0] == CandidateOutcome::DuplicateHit);
  CHECK(m.detected[0]);
  m = match_candidates({{"other", {0, 0, 0}, 5, 0.5}}, gt);
  CHECK(m.outcomes[0] == CandidateOutcome::FalsePositive);
}

TEST_CASE("froc ideal and empty detectors")
{
  const std::vector<GroundTruthNodule> gt{{"a", {0, 0, 0}, 8}, {"b", {10, 10, 10}, 6}};
  std::vector<NoduleCandidate> perfect;
  for (const auto& g : gt)
    perfect.push_back({g.scan_id, g.center_mm, g.diameter_mm, 0.9});
  const auto r = froc(perfect, gt, 2);
  for (double v : r.level_sensitivities)
    CHECK(v == 1.0);
  CHECK(r.cpm == 1.0);
  const auto e = froc({}, gt, 2);
  CHECK(e.cpm == 0.0);
  CHECK(e.operating_points.empty());
  try {
    froc(perfect, {}, 2);
    FAIL("expected an undefined-metric error");
  } catch (const Error& err) {
    CHECK(err.kind() == ErrorKind::UndefinedMetric);
  }
}

TEST_CASE("froc equals the brute-force sweep")
{
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    fixtures::FrocInstance in = fixtures::random_froc_instance(rng, 5, 10, 40);
    check_against_oracle(in);
    const auto r = froc(in.candidates, in.ground_truth, in.scans);
    for (std::size_t l = 1; l < 7; ++l)
      CHECK(r.level_sensitivities[l] >= r.level_sensitivities[l - 1]);
  }
}

TEST_CASE("matching ignores input order")
{
  std::mt19937_64 rng(78);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = fixtures::random_froc_instance(rng, 3, 6, 25);
    const auto base = match_candidates(in.candidates, in.ground_truth);
    std::vector<std::size_t> perm(in.candidates.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<NoduleCandidate> shuffled;
    for (auto i : perm)
      shuffled.push_back(in.candidates[i]);
    const auto m = match_candidates(shuffled, in.ground_truth);
    for (std::size_t k = 0; k < perm.size(); ++k)
      CHECK(m.outcomes[k] == base.outcomes[perm[k]]);
    CHECK(m.detected == base.detected);
  }
}

TEST_CASE("adding candidates moves level sensitivities the right way")
{
  std::mt19937_64 rng(79);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = fixtures::random_froc_instance(rng, 3, 6, 20);
    const auto base = froc(in.candidates, in.ground_truth, in.scans);
    auto with_fp = in.candidates;
    with_fp.push_back({"s0", {1000, 1000, 1000}, 5, 0.55});
    const auto fp = froc(with_fp, in.ground_truth, in.scans);
    auto with_tp = in.candidates;
    const auto& g = in.ground_truth[0];
    with_tp.push_back({g.scan_id, g.center_mm, 5, 0.999});
    const auto tp = froc(with_tp, in.ground_truth, in.scans);
    for (std::size_t l = 0; l < 7; ++l) {
      CHECK(fp.level_sensitivities[l] <= base.level_sensitivities[l]);
      CHECK(tp.level_sensitivities[l] >= base.level_sensitivities[l]);
    }
  }
}

TEST_CASE("cpm arithmetic")
{
  const std::array<double, 7> dou{0.659, 0.745, 0.819, 0.865, 0.906, 0.933, 0.946};
  const std::array<double, 7> fpn{0.848, 0.876, 0.905, 0.933, 0.943, 0.957, 0.970};
  const std::array<double, 7> hs2{0.904, 0.914, 0.933, 0.957, 0.971, 0.971, 0.971};
  CHECK(std::fabs(cpm(dou) - 0.839) <= 0.0005);
  CHECK(std::fabs(cpm(fpn) - 0.919) <= 0.0005);
  const auto c = check_reported_cpm(hs2, 0.952);
  CHECK(std::fabs(c.computed - 0.946) <= 0.0005);
  CHECK(c.discrepancy);
  CHECK_FALSE(check_reported_cpm(dou, 0.839).discrepancy);
  const std::array<double, 7> ones{1, 1, 1, 1, 1, 1, 1};
  CHECK(cpm(ones) == 1.0);
  const std::array<double, 6> short_row{};
  CHECK_THROWS_AS(cpm(short_row), Error);
}

TEST_CASE("sensitivity and specificity")
{
  auto s = sensitivity_specificity(10, 0, 10, 0);
  CHECK(s.sensitivity == 1.0);
  CHECK(s.specificity == 1.0);
  s = sensitivity_specificity(9, 1, 8, 2);
  CHECK(s.sensitivity == doctest::Approx(0.9));
  CHECK(s.specificity == doctest::Approx(0.8));
  s = sensitivity_specificity(0, 5, 5, 0);
  CHECK(s.sensitivity == 0.0);
  CHECK(s.specificity == 1.0);
  CHECK_THROWS_AS(sensitivity_specificity(0, 0, 1, 1), Error);
}

TEST_CASE("fp reduction report")
{
  const std::vector<GroundTruthNodule> gt{{"s", {0, 0, 0}, 10}};
  std::vector<NoduleCandidate> before{{"s", {0, 0, 0}, 5, 0.9}};
  for (int i = 0; i < 629; ++i)
    before.push_back({"s", {100.0 + i, 0, 0}, 5, 0.5});
  auto r = fp_reduction_report(before, before, gt);
  CHECK(r.reduction_percent == 0.0);
  CHECK(r.fp_before == 629);

  std::vector<NoduleCandidate> after(before.begin(), before.begin() + 98); // the TP and 97 FPs
  r = fp_reduction_report(before, after, gt);
  CHECK(r.fp_after == 97);
  CHECK(r.reduction_percent_rounded == doctest::Approx(84.6));
  CHECK(r.sensitivity_after == r.sensitivity_before);

  std::vector<NoduleCandidate> foreign{{"s", {7, 7, 7}, 5, 0.1}};
  try {
    fp_reduction_report(before, foreign, gt);
    FAIL("expected an identity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Identity);
  }
}

TEST_CASE("round half even")
{
  CHECK(round_half_even(84.25, 1) == doctest::Approx(84.2));
  CHECK(round_half_even(84.35, 1) == doctest::Approx(84.4));
  CHECK(round_half_even(84.5799, 1) == doctest::Approx(84.6));
}

TEST_CASE("report formats")
{
  const std::vector<GroundTruthNodule> gt{{"s", {0, 0, 0}, 10}};
  const auto r = froc({{"s", {0, 0, 0}, 5, 0.7}, {"s", {50, 0, 0}, 5, 0.3}}, gt, 1);
  CHECK(format_froc_csv(r) == "threshold,fps_per_scan,sensitivity\n0.7,0,1\n0.3,1,1\n");
  const auto j = format_froc_json(r);
  CHECK(j.find("\"cpm\": 1.0") != std::string::npos);
  CHECK(j.find("stepwise") != std::string::npos);
  CHECK(format_froc_curve(r) == "# fps_per_scan sensitivity\n0 0\n0 1\n1 1\n");
}
