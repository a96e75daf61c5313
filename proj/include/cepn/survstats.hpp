#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cepn/data.hpp"
#include "cepn/error.hpp"
#include "cepn/linalg.hpp"

namespace cepn {

// Concordance index over pairs (i, j) with event i and t_j > t_i. Ties in the
// risk score count 0 by default (strict indicator); half_tie_credit scores
// them 0.5 instead.
inline double c_index(const std::vector<double>& risk,
                      const std::vector<SurvivalLabel>& labels,
                      bool half_tie_credit = false) {
  if (risk.size() != labels.size())
    throw shape_error("c_index: " + std::to_string(risk.size()) + " risks vs " +
                      std::to_string(labels.size()) + " labels");
  double num = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < risk.size(); ++i) {
    if (!labels[i].event) continue;
    for (std::size_t j = 0; j < risk.size(); ++j) {
      if (labels[j].time <= labels[i].time) continue;
      ++pairs;
      if (risk[i] > risk[j])
        num += 1.0;
      else if (half_tie_credit && risk[i] == risk[j])
        num += 0.5;
    }
  }
  if (pairs == 0) throw numeric_error("c_index: no comparable pairs");
  return num / static_cast<double>(pairs);
}

struct KmCurve {
  std::vector<double> event_times;  // distinct, ascending
  std::vector<double> survival;     // S(t) just after each event time
  std::vector<int> at_risk;
  std::vector<int> n_events;
};

// Product-limit estimator. Subjects censored at t are still at risk at t,
// matching the t_j >= t_i risk-set convention used everywhere else.
inline KmCurve kaplan_meier(const std::vector<SurvivalLabel>& labels) {
  if (labels.empty()) throw shape_error("kaplan_meier: empty cohort");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return labels[a].time < labels[b].time;
  });
  KmCurve curve;
  double s = 1.0;
  std::size_t pos = 0;
  const std::size_t n = labels.size();
  while (pos < n) {
    const double t = labels[order[pos]].time;
    int d = 0;
    std::size_t next = pos;
    while (next < n && labels[order[next]].time == t) {
      d += labels[order[next]].event ? 1 : 0;
      ++next;
    }
    if (d > 0) {
      const int r = static_cast<int>(n - pos);
      s *= 1.0 - static_cast<double>(d) / static_cast<double>(r);
      curve.event_times.push_back(t);
      curve.survival.push_back(s);
      curve.at_risk.push_back(r);
      curve.n_events.push_back(d);
    }
    pos = next;
  }
  return curve;
}

struct LogRankResult {
  double chi2 = 0.0;
  double p = 1.0;
};

// Two-group log-rank test: observed minus hypergeometric-expected events in
// group 0, summed over distinct event times; chi-square with 1 df.
inline LogRankResult log_rank_test(const std::vector<SurvivalLabel>& group0,
                                   const std::vector<SurvivalLabel>& group1) {
  if (group0.empty() || group1.empty())
    throw shape_error("log_rank_test: both groups must be non-empty");
  struct Row {
    double time;
    int event;
    int group;
  };
  std::vector<Row> rows;
  rows.reserve(group0.size() + group1.size());
  for (const auto& l : group0) rows.push_back({l.time, l.event, 0});
  for (const auto& l : group1) rows.push_back({l.time, l.event, 1});
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.time < b.time; });
  std::size_t total_events = 0;
  for (const auto& r : rows) total_events += r.event ? 1 : 0;
  if (total_events == 0) throw numeric_error("log_rank_test: no events in either group");

  double observed = 0.0, expected = 0.0, variance = 0.0;
  std::size_t pos = 0;
  const std::size_t n = rows.size();
  // Counts still at risk in each group.
  double at_risk0 = static_cast<double>(group0.size());
  double at_risk1 = static_cast<double>(group1.size());
  while (pos < n) {
    const double t = rows[pos].time;
    double d = 0.0, d0 = 0.0, leaving0 = 0.0, leaving1 = 0.0;
    std::size_t next = pos;
    while (next < n && rows[next].time == t) {
      if (rows[next].event) {
        d += 1.0;
        if (rows[next].group == 0) d0 += 1.0;
      }
      (rows[next].group == 0 ? leaving0 : leaving1) += 1.0;
      ++next;
    }
    const double total = at_risk0 + at_risk1;
    if (d > 0.0 && total > 1.0) {
      observed += d0;
      expected += d * at_risk0 / total;
      variance += d * (at_risk0 / total) * (at_risk1 / total) * (total - d) / (total - 1.0);
    }
    at_risk0 -= leaving0;
    at_risk1 -= leaving1;
    pos = next;
  }
  LogRankResult res;
  if (variance > 0.0) {
    const double diff = observed - expected;
    res.chi2 = diff * diff / variance;
  }
  res.p = chi2_1df_p(res.chi2);
  return res;
}

// (test - train_mean) / train_std with the population (1/n) standard deviation.
inline std::vector<double> normalize_risk_scores(const std::vector<double>& train,
                                                 const std::vector<double>& test) {
  if (train.empty()) throw shape_error("normalize_risk_scores: empty training risks");
  double mean = 0.0;
  for (double v : train) mean += v;
  mean /= static_cast<double>(train.size());
  double var = 0.0;
  for (double v : train) var += (v - mean) * (v - mean);
  var /= static_cast<double>(train.size());
  if (!(var > 0.0))
    throw numeric_error("normalize_risk_scores: zero variance in training risks");
  const double sd = std::sqrt(var);
  std::vector<double> out(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) out[i] = (test[i] - mean) / sd;
  return out;
}

// 1 = high (score > median), 0 = low (score <= median). Even n uses the mean
// of the two middle order statistics.
inline std::vector<int> median_stratify(const std::vector<double>& score) {
  if (score.size() < 2) throw shape_error("median_stratify: need at least 2 scores");
  std::vector<double> sorted = score;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median =
      (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  std::vector<int> group(n);
  for (std::size_t i = 0; i < n; ++i) group[i] = score[i] > median ? 1 : 0;
  return group;
}

// Column-wise standardization to zero mean, unit population variance.
// Zero-variance columns become all zeros. Returns {means, sds}.
inline std::pair<std::vector<double>, std::vector<double>> standardize_columns(
    std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw shape_error("standardize_columns: empty matrix");
  const std::size_t p = rows[0].size();
  std::vector<double> mean(p, 0.0), sd(p, 0.0);
  for (const auto& r : rows) {
    if (r.size() != p) throw shape_error("standardize_columns: ragged rows");
    for (std::size_t k = 0; k < p; ++k) mean[k] += r[k];
  }
  for (std::size_t k = 0; k < p; ++k) mean[k] /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t k = 0; k < p; ++k) sd[k] += (r[k] - mean[k]) * (r[k] - mean[k]);
  for (std::size_t k = 0; k < p; ++k)
    sd[k] = std::sqrt(sd[k] / static_cast<double>(rows.size()));
  for (auto& r : rows)
    for (std::size_t k = 0; k < p; ++k) r[k] = sd[k] > 0.0 ? (r[k] - mean[k]) / sd[k] : 0.0;
  return {mean, sd};
}

}  // namespace cepn
