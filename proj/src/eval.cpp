// Copyright 2026 The vtrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0

#include "vt/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include "vt/ctc.hpp"

namespace vt {

std::optional<double> trigger_score(const Matrix& log_posteriors,
                                    const std::vector<int>& trigger,
                                    const ScoreOptions& opts) {
  if (trigger.empty()) throw DataError("trigger_score: empty trigger sequence");
  if (log_posteriors.rows() < ctc_min_frames(trigger)) return std::nullopt;
  double score = ctc_log_prob(log_posteriors, trigger);
  if (opts.length_normalize) score /= static_cast<double>(log_posteriors.rows());
  return score;
}

std::optional<double> score_segment(const ModelGraph& m, const Matrix& mel,
                                    const std::vector<int>& trigger,
                                    const ScoreOptions& opts) {
  const Matrix input = prepare_input(m, mel);
  if (input.rows() < ctc_min_frames(trigger)) return std::nullopt;
  const AmOut out = am_forward(m, input);
  return trigger_score(out.logp, trigger, opts);
}

std::vector<ScoredSegment> score_eval_segments(const ModelGraph& m, const Corpus& corpus,
                                               const ScoreOptions& opts, int threads) {
  const std::vector<int>& trigger = corpus.spec.trigger;
  if (trigger.empty()) throw DataError("score: corpus has no trigger sequence");

  std::vector<const Utterance*> jobs;
  for (const auto& u : corpus.utts) {
    if (u.split != Split::eval) continue;
    if (u.kind == SegmentKind::am_train) continue;
    jobs.push_back(&u);
  }
  Eigen::setNbThreads(1);  // segment-level parallelism only
  std::vector<ScoredSegment> out(jobs.size());
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::vector<std::exception_ptr> errors(workers);
  auto body = [&](int w) {
    try {
      for (size_t i = w; i < jobs.size(); i += workers) {
        const Utterance& u = *jobs[i];
        ScoredSegment s;
        s.id = u.id;
        s.positive = u.kind == SegmentKind::positive;
        s.duration_sec = u.duration_sec();
        const auto score = score_segment(m, u.mel, trigger, opts);
        s.feasible = score.has_value();
        s.score = score.value_or(0.0);
        out[i] = std::move(s);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    body(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double scored_negative_hours(const std::vector<ScoredSegment>& scored) {
  double seconds = 0.0;
  for (const auto& s : scored)
    if (!s.positive) seconds += s.duration_sec;
  return seconds / 3600.0;
}

DetCurve det_curve(const std::vector<ScoredSegment>& scored, double negative_hours) {
  if (negative_hours <= 0.0) throw DataError("det_curve: negative hours must be positive");
  DetCurve curve;
  curve.negative_hours = negative_hours;

  std::vector<double> pos, neg;
  int infeasible_pos = 0;
  for (const auto& s : scored) {
    if (s.positive) {
      ++curve.n_positives;
      if (s.feasible)
        pos.push_back(s.score);
      else
        ++infeasible_pos;  // always rejected
    } else {
      ++curve.n_negatives;
      if (s.feasible) neg.push_back(s.score);  // infeasible negatives never alarm
    }
  }
  if (curve.n_positives == 0 || curve.n_negatives == 0)
    throw DataError("det_curve: need at least one positive and one negative");

  std::vector<double> thresholds;
  thresholds.reserve(pos.size() + neg.size());
  thresholds.insert(thresholds.end(), pos.begin(), pos.end());
  thresholds.insert(thresholds.end(), neg.begin(), neg.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  for (const double theta : thresholds) {
    DetPoint p;
    p.threshold = theta;
    // Negatives scoring >= theta fire; positives scoring < theta are lost.
    p.fa_count = static_cast<int>(neg.end() -
                                  std::lower_bound(neg.begin(), neg.end(), theta));
    p.fa_per_hour = p.fa_count / negative_hours;
    const int rejected =
        static_cast<int>(std::lower_bound(pos.begin(), pos.end(), theta) - pos.begin()) +
        infeasible_pos;
    p.frr = static_cast<double>(rejected) / curve.n_positives;
    curve.points.push_back(p);
  }
  return curve;
}

namespace {

const DetPoint& operating_point(const DetCurve& curve,
                                const std::function<bool(const DetPoint&)>& within_budget,
                                const std::string& what) {
  if (curve.points.empty()) throw DataError("operating point: empty curve");
  // Points are sorted by ascending threshold with non-increasing FA, so the
  // first point within budget is the lowest feasible threshold.
  for (const auto& p : curve.points)
    if (within_budget(p)) return p;
  throw DataError("operating point unreachable: even the highest threshold exceeds " + what);
}

}  // namespace

double frr_at_fa(const DetCurve& curve, double target_fa_per_hour) {
  return operating_point(curve,
                         [&](const DetPoint& p) { return p.fa_per_hour <= target_fa_per_hour; },
                         std::to_string(target_fa_per_hour) + " FA/hour")
      .frr;
}

double frr_at_fa_count(const DetCurve& curve, int max_fa_count) {
  return operating_point(curve,
                         [&](const DetPoint& p) { return p.fa_count <= max_fa_count; },
                         std::to_string(max_fa_count) + " FAs")
      .frr;
}

void write_det_csv(const std::string& path, const DetCurve& curve) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write DET csv: " + path);
  f.precision(17);
  f << "threshold,fa_per_hour,frr\n";
  for (const auto& p : curve.points)
    f << p.threshold << "," << p.fa_per_hour << "," << p.frr << "\n";
}

void write_eval_summary(const std::string& path, const DetCurve& curve,
                        const std::vector<double>& fa_per_hour_targets,
                        const std::vector<int>& fa_count_targets) {
  nlohmann::json j;
  j["negative_hours"] = curve.negative_hours;
  j["n_positives"] = curve.n_positives;
  j["n_negatives"] = curve.n_negatives;
  nlohmann::json frr_at_json = nlohmann::json::object();
  for (const double target : fa_per_hour_targets) {
    char key[64];
    std::snprintf(key, sizeof key, "%g", target);
    try {
      frr_at_json[key] = frr_at_fa(curve, target);
    } catch (const DataError&) {
      frr_at_json[key] = nullptr;  // unreachable at this negative-hours budget
    }
  }
  j["frr_at_fa_per_hour"] = frr_at_json;
  if (!fa_count_targets.empty()) {
    nlohmann::json by_count = nlohmann::json::object();
    for (const int target : fa_count_targets) {
      try {
        by_count[std::to_string(target)] = frr_at_fa_count(curve, target);
      } catch (const DataError&) {
        by_count[std::to_string(target)] = nullptr;
      }
    }
    j["frr_at_fa_count"] = by_count;
  }
  std::ofstream f(path);
  if (!f) throw DataError("cannot write eval summary: " + path);
  f << j.dump(2) << "\n";
}

double spearman_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DataError("spearman: need two equally sized samples");
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return v[x] < v[y]; });
    std::vector<double> r(n);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (i + j) + 1.0;  // average rank for ties
      for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double mean = (n + 1.0) / 2.0;
  double num = 0.0, da = 0.0, db = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (ra[i] - mean) * (rb[i] - mean);
    da += (ra[i] - mean) * (ra[i] - mean);
    db += (rb[i] - mean) * (rb[i] - mean);
  }
  if (da == 0.0 || db == 0.0) return 1.0;  // constant ranks
  return num / std::sqrt(da * db);
}

}  // namespace vt
