#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cepn/data.hpp"
#include "cepn/error.hpp"
#include "cepn/nn.hpp"

namespace cepn {

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;
};

// Negative log Cox partial likelihood, summed over events, with risk sets
// {j : t_j >= t_i} (ties enter the denominator as written). Log-sum-exp uses
// max-subtraction; the O(n^2) pass is fine at cohort batch sizes.
inline LossResult cox_loss(const std::vector<double>& risk,
                           const std::vector<SurvivalLabel>& labels) {
  if (risk.size() != labels.size())
    throw shape_error("cox_loss: " + std::to_string(risk.size()) + " risks vs " +
                      std::to_string(labels.size()) + " labels");
  const std::size_t n = risk.size();
  for (double y : risk)
    if (!std::isfinite(y)) throw numeric_error("cox_loss: non-finite risk score");
  std::size_t events = 0;
  for (const auto& l : labels) events += l.event ? 1 : 0;
  if (events == 0) throw numeric_error("cox_loss: batch has no events");

  LossResult out;
  out.grad.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!labels[i].event) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (labels[j].time >= labels[i].time) mx = std::max(mx, risk[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (labels[j].time >= labels[i].time) denom += std::exp(risk[j] - mx);
    out.loss += -risk[i] + mx + std::log(denom);
    out.grad[i] -= 1.0;
    for (std::size_t j = 0; j < n; ++j)
      if (labels[j].time >= labels[i].time)
        out.grad[j] += std::exp(risk[j] - mx) / denom;
  }
  return out;
}

// Mean weighted binary cross-entropy on raw logits:
//   -[w·r·log σ(z) + (1−r)·log(1−σ(z))] with log σ(z) = −softplus(−z).
inline LossResult weighted_bce(const std::vector<double>& logits,
                               const std::vector<int>& labels, double pos_weight) {
  if (logits.size() != labels.size())
    throw shape_error("weighted_bce: " + std::to_string(logits.size()) + " logits vs " +
                      std::to_string(labels.size()) + " labels");
  if (logits.empty()) throw shape_error("weighted_bce: empty batch");
  if (!(pos_weight > 0.0)) throw config_error("weighted_bce: pos_weight must be > 0");
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  LossResult out;
  out.grad.assign(logits.size(), 0.0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    if (!std::isfinite(z)) throw numeric_error("weighted_bce: non-finite logit");
    if (labels[i]) {
      out.loss += pos_weight * softplus(-z) * inv_n;
      out.grad[i] = -pos_weight * sigmoid(-z) * inv_n;
    } else {
      out.loss += softplus(z) * inv_n;
      out.grad[i] = sigmoid(z) * inv_n;
    }
  }
  return out;
}

inline double pos_weight_from_counts(long n_neg, long n_pos) {
  if (n_pos < 1) throw config_error("pos_weight_from_counts: need at least one positive");
  if (n_neg < 0) throw config_error("pos_weight_from_counts: negative count");
  return static_cast<double>(n_neg) / static_cast<double>(n_pos);
}

}  // namespace cepn
