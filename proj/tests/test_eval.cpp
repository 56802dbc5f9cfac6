// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include <doctest.h>

#include <cmath>
#include <algorithm>

#include "test_util.hpp"
#include "vt/ctc.hpp"
#include "vt/eval.hpp"

using namespace vt;
using test::random_log_posteriors;

namespace {

ScoredSegment seg(double score, bool positive, double dur_sec = 1.8) {
  ScoredSegment s;
  s.score = score;
  s.positive = positive;
  s.duration_sec = dur_sec;
  s.id = (positive ? "p" : "n") + std::to_string(score);
  return s;
}

std::vector<ScoredSegment> random_scored(Rng& rng, int n_pos, int n_neg) {
  std::vector<ScoredSegment> out;
  for (int i = 0; i < n_pos; ++i) out.push_back(seg(rng.normal() + 0.5, true));
  for (int i = 0; i < n_neg; ++i) out.push_back(seg(rng.normal(), false));
  return out;
}

}  // namespace

TEST_CASE("trigger_score: probability-one path scores zero") {
  Matrix logp(1, 3);
  logp << kNegInf, 0.0, kNegInf;  // all mass on the trigger phone
  CHECK(*trigger_score(logp, {1}) == 0.0);
}

TEST_CASE("trigger_score: uniform two-frame case scores ln(1/3)") {
  const Matrix logp = Matrix::Constant(2, 3, -std::log(3.0));
  const double score = *trigger_score(logp, {1});
  CHECK(std::abs(score - std::log(1.0 / 3.0)) <= 1e-12);
}

TEST_CASE("trigger_score: infeasibly short segments are rejected, not scored") {
  const Matrix logp = Matrix::Constant(1, 3, -std::log(3.0));
  CHECK_FALSE(trigger_score(logp, {1, 2}).has_value());
  CHECK(trigger_score(logp, {1}).has_value());
}

TEST_CASE("trigger_score: length normalization divides by frame count") {
  const Matrix logp = Matrix::Constant(4, 3, -std::log(3.0));
  ScoreOptions norm;
  norm.length_normalize = true;
  CHECK(*trigger_score(logp, {1}, norm) ==
        doctest::Approx(*trigger_score(logp, {1}) / 4.0).epsilon(1e-12));
}

TEST_CASE("trigger_score: raising trigger-path mass never lowers the score") {
  // Every alignment that scores the trigger spends its probability on the
  // trigger symbols and blank; moving mass from the remaining symbols onto
  // that set (proportionally) can only raise the forward probability.
  Rng rng(31);
  int tested = 0;
  for (int it = 0; it < 400 && tested < 200; ++it) {
    const int T = rng.uniform_int(2, 7);
    const int A = rng.uniform_int(4, 6);
    std::vector<int> trigger;
    const int L = rng.uniform_int(1, std::min(3, T));
    for (int i = 0; i < L; ++i) {
      int p = rng.uniform_int(1, A - 2);
      while (!trigger.empty() && p == trigger.back()) p = rng.uniform_int(1, A - 2);
      trigger.push_back(p);
    }
    std::vector<bool> on_path(static_cast<size_t>(A), false);
    on_path[kCtcBlank] = true;
    for (int p : trigger) on_path[static_cast<size_t>(p)] = true;
    if (std::all_of(on_path.begin(), on_path.end(), [](bool b) { return b; })) continue;

    const Matrix logp = random_log_posteriors(T, A, rng);
    const double base = *trigger_score(logp, trigger);

    const int frame = rng.uniform_int(0, T - 1);
    const double eps = 0.25 * rng.uniform01();
    Eigen::RowVectorXd probs = logp.row(frame).array().exp();
    double path_mass = 0.0;
    for (int a = 0; a < A; ++a)
      if (on_path[static_cast<size_t>(a)]) path_mass += probs(a);
    Eigen::RowVectorXd boosted = (1.0 - eps) * probs;
    for (int a = 0; a < A; ++a)
      if (on_path[static_cast<size_t>(a)]) boosted(a) += eps * probs(a) / path_mass;
    Matrix perturbed = logp;
    perturbed.row(frame) = boosted.array().log();

    const double moved = *trigger_score(perturbed, trigger);
    CHECK(moved >= base - 1e-12);
    ++tested;
  }
  CHECK(tested == 200);
}

TEST_CASE("det_curve: hand-counted two-positive case") {
  const std::vector<ScoredSegment> scored = {seg(2.0, true), seg(3.0, true),
                                             seg(1.0, false, 3600.0)};
  const DetCurve curve = det_curve(scored, 1.0);
  REQUIRE(curve.points.size() == 3);
  // Lowest threshold accepts everything: frr 0, fa = one per hour.
  CHECK(curve.points[0].frr == 0.0);
  CHECK(curve.points[0].fa_per_hour == 1.0);
  // A separating threshold exists with zero on both axes.
  bool perfect = false;
  for (const auto& p : curve.points)
    if (p.fa_per_hour == 0.0 && p.frr == 0.0) perfect = true;
  CHECK(perfect);
}

TEST_CASE("det_curve: validation errors") {
  CHECK_THROWS_AS(det_curve({seg(1.0, true)}, 1.0), DataError);
  CHECK_THROWS_AS(det_curve({seg(1.0, true), seg(0.0, false)}, 0.0), DataError);
}

TEST_CASE("det_curve: monotone in the threshold for random score sets") {
  Rng rng(32);
  for (int it = 0; it < 200; ++it) {
    const auto scored = random_scored(rng, rng.uniform_int(1, 20), rng.uniform_int(1, 40));
    const DetCurve curve = det_curve(scored, 0.5);
    for (size_t i = 1; i < curve.points.size(); ++i) {
      CHECK(curve.points[i].threshold > curve.points[i - 1].threshold);
      CHECK(curve.points[i].fa_per_hour <= curve.points[i - 1].fa_per_hour);
      CHECK(curve.points[i].frr >= curve.points[i - 1].frr);
    }
  }
}

TEST_CASE("det_curve: invariant under strictly increasing score transforms") {
  Rng rng(33);
  for (int it = 0; it < 50; ++it) {
    const auto scored = random_scored(rng, 8, 16);
    auto transformed = scored;
    for (auto& s : transformed) s.score = std::exp(0.7 * s.score) + 3.0;
    const DetCurve a = det_curve(scored, 0.25);
    const DetCurve b = det_curve(transformed, 0.25);
    REQUIRE(a.points.size() == b.points.size());
    for (size_t i = 0; i < a.points.size(); ++i) {
      CHECK(a.points[i].fa_per_hour == b.points[i].fa_per_hour);
      CHECK(a.points[i].frr == b.points[i].frr);
    }
  }
}

TEST_CASE("frr_at_fa: step-function operating point") {
  // Curve points: (fa 0.5/hr, frr 0) then (fa 0/hr, frr 0.2).
  std::vector<ScoredSegment> scored;
  scored.push_back(seg(1.0, false, 2.0 * 3600.0));
  scored.push_back(seg(1.0, true));
  for (int i = 0; i < 4; ++i) scored.push_back(seg(2.0, true));
  const DetCurve curve = det_curve(scored, 2.0);
  REQUIRE(curve.points.size() == 2);
  CHECK(curve.points[0].fa_per_hour == 0.5);
  CHECK(curve.points[0].frr == 0.0);
  CHECK(curve.points[1].fa_per_hour == 0.0);
  CHECK(curve.points[1].frr == 0.2);

  CHECK(frr_at_fa(curve, 0.1) == 0.2);
  CHECK(frr_at_fa(curve, 0.5) == 0.0);
  CHECK(frr_at_fa_count(curve, 0) == 0.2);
  CHECK(frr_at_fa_count(curve, 1) == 0.0);
}

TEST_CASE("frr_at_fa: perfectly separated scores reach zero at any target") {
  std::vector<ScoredSegment> scored = {seg(5.0, true), seg(6.0, true), seg(1.0, false, 3600),
                                       seg(2.0, false, 3600)};
  const DetCurve curve = det_curve(scored, 2.0);
  CHECK(frr_at_fa(curve, 0.01) == 0.0);
  CHECK(frr_at_fa(curve, 1.0) == 0.0);
}

TEST_CASE("frr_at_fa: unreachable targets raise an error") {
  // The top score is a negative, so no threshold silences it.
  const std::vector<ScoredSegment> scored = {seg(1.0, true), seg(5.0, false, 1800.0)};
  const DetCurve curve = det_curve(scored, 0.5);
  CHECK_THROWS_AS(frr_at_fa(curve, 0.01), DataError);
}

TEST_CASE("frr_at_fa: non-increasing in the target rate") {
  Rng rng(34);
  for (int it = 0; it < 50; ++it) {
    const auto scored = random_scored(rng, 10, 30);
    const DetCurve curve = det_curve(scored, 0.5);
    // Walking the target downward, FRR can only stay or rise.
    double frr_at_larger_target = -1.0;
    for (double target = 100.0; target >= 0.009; target /= 3.0) {
      double frr;
      try {
        frr = frr_at_fa(curve, target);
      } catch (const DataError&) {
        break;  // smaller targets stay unreachable too
      }
      CHECK(frr >= frr_at_larger_target - 1e-12);
      frr_at_larger_target = frr;
    }
  }
}

TEST_CASE("scored_negative_hours: sums negative durations only") {
  const std::vector<ScoredSegment> scored = {seg(0.0, true, 100.0), seg(0.0, false, 1800.0),
                                             seg(1.0, false, 1800.0)};
  CHECK(scored_negative_hours(scored) == doctest::Approx(1.0));
}

TEST_CASE("spearman: hand cases") {
  CHECK(spearman_correlation({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman_correlation({1, 2, 3, 4}, {9, 7, 5, 3}) == doctest::Approx(-1.0));
  // Monotone transform preserves rank correlation.
  Rng rng(35);
  std::vector<double> a, b;
  for (int i = 0; i < 100; ++i) {
    const double v = rng.normal();
    a.push_back(v);
    b.push_back(std::tanh(v) * 3.0 + 1.0);
  }
  CHECK(spearman_correlation(a, b) == doctest::Approx(1.0));
  // Ties get average ranks.
  CHECK(spearman_correlation({1, 1, 2}, {5, 5, 9}) == doctest::Approx(1.0));
}
