// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vt/model.hpp"
#include "vt/synthdata.hpp"

namespace vt {

struct ScoreOptions {
  bool length_normalize = false;  // divide by frame count; off by default
};

// Trigger score of a segment: CTC forward log-probability of the trigger
// phone sequence under the frame log-posteriors. Returns nullopt when the
// segment is too short for any alignment; callers count that as a reject.
std::optional<double> trigger_score(const Matrix& log_posteriors,
                                    const std::vector<int>& trigger,
                                    const ScoreOptions& opts = {});

// Full pipeline: mel -> normalized/spliced/encoded input -> model -> score.
std::optional<double> score_segment(const ModelGraph& m, const Matrix& mel,
                                    const std::vector<int>& trigger,
                                    const ScoreOptions& opts = {});

struct ScoredSegment {
  std::string id;
  double score = 0.0;  // finite; ignore when !feasible
  bool feasible = true;
  bool positive = false;
  double duration_sec = 0.0;
};

// Scores every eval-split segment of the corpus (positives, hard negatives,
// background). Parallel over segments; output order is the corpus order.
std::vector<ScoredSegment> score_eval_segments(const ModelGraph& m, const Corpus& corpus,
                                               const ScoreOptions& opts = {}, int threads = 1);

// Hours of negative audio among the scored segments.
double scored_negative_hours(const std::vector<ScoredSegment>& scored);

struct DetPoint {
  double threshold = 0.0;
  double fa_per_hour = 0.0;
  int fa_count = 0;
  double frr = 0.0;
};

// Swept over the sorted unique feasible scores, ascending. As the threshold
// increases fa_per_hour is non-increasing and frr non-decreasing.
struct DetCurve {
  std::vector<DetPoint> points;
  double negative_hours = 0.0;
  int n_positives = 0;
  int n_negatives = 0;
};

DetCurve det_curve(const std::vector<ScoredSegment>& scored, double negative_hours);

// FRR at the operating point that just satisfies the false-alarm budget: the
// lowest threshold with fa_per_hour <= target (step function, no
// interpolation). Throws DataError when no threshold reaches the target.
double frr_at_fa(const DetCurve& curve, double target_fa_per_hour);

// Count-based variant of the operating point.
double frr_at_fa_count(const DetCurve& curve, int max_fa_count);

void write_det_csv(const std::string& path, const DetCurve& curve);

// Summary JSON with FRR at each requested FA/hour target (null when the
// target is unreachable) and optional count-based targets.
void write_eval_summary(const std::string& path, const DetCurve& curve,
                        const std::vector<double>& fa_per_hour_targets,
                        const std::vector<int>& fa_count_targets = {});

// Spearman rank correlation with average ranks on ties.
double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace vt
