#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cepn/losses.hpp"
#include "cepn/model_io.hpp"
#include "cepn/optimizer.hpp"
#include "cepn/phantom.hpp"
#include "cepn/prognet.hpp"
#include "cepn/survstats.hpp"

namespace cepn {

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t max_epochs = 50;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
  bool augment = true;
  double pos_weight = 0.0;  // 0 = derive from training margin counts
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::size_t batches = 0, skipped_batches = 0;
  double val_metric = 0.0;
  bool is_best = false;
};

struct TrainResult {
  Model best;        // highest validation metric
  Model last;        // state when training stopped (last finite state)
  std::vector<EpochLog> log;
  double best_val = 0.0;
  std::size_t best_epoch = 0;
  bool diverged = false;
};

struct Metrics {
  std::optional<double> c_index, balanced_accuracy, sensitivity, specificity;
};

inline ModelOutput predict(Model& m, const Cohort& cohort,
                           const std::vector<std::size_t>& idx,
                           std::size_t batch_size = 16) {
  ModelOutput all;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t stop = std::min(idx.size(), start + batch_size);
    std::vector<const Patient*> batch;
    for (std::size_t i = start; i < stop; ++i) batch.push_back(&cohort[idx[i]]);
    BatchInputs in = make_batch_inputs(batch, m.config);
    ModelOutput out = model_forward(m, in, BnMode::eval, nullptr);
    all.risk.insert(all.risk.end(), out.risk.begin(), out.risk.end());
    all.margin_logit.insert(all.margin_logit.end(), out.margin_logit.begin(),
                            out.margin_logit.end());
  }
  return all;
}

// Margin metrics threshold raw logits at 0. Undefined metrics (no positives
// or no negatives in the fold) stay absent rather than collapsing to 0.
inline Metrics compute_metrics(const std::vector<double>& risks,
                               const std::vector<SurvivalLabel>& slabels,
                               const std::vector<double>& logits,
                               const std::vector<int>& mlabels,
                               bool half_tie_credit = false) {
  Metrics metrics;
  if (!risks.empty()) {
    try {
      metrics.c_index = c_index(risks, slabels, half_tie_credit);
    } catch (const numeric_error&) {
      // no comparable pairs: stays absent
    }
  }
  if (!logits.empty()) {
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const bool pred = logits[i] > 0.0;
      if (mlabels[i]) {
        (pred ? tp : fn) += 1;
      } else {
        (pred ? fp : tn) += 1;
      }
    }
    if (tp + fn > 0)
      metrics.sensitivity = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tn + fp > 0)
      metrics.specificity = static_cast<double>(tn) / static_cast<double>(tn + fp);
    if (metrics.sensitivity && metrics.specificity)
      metrics.balanced_accuracy = 0.5 * (*metrics.sensitivity + *metrics.specificity);
  }
  return metrics;
}

namespace detail {

inline std::vector<SurvivalLabel> labels_of(const Cohort& cohort,
                                            const std::vector<std::size_t>& idx) {
  std::vector<SurvivalLabel> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(cohort[i].survival);
  return out;
}

inline std::vector<int> margins_of(const Cohort& cohort,
                                   const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(cohort[i].margin);
  return out;
}

inline bool grads_finite(const Model& grads) {
  for (const Tensor* t : param_tensors(grads))
    if (!all_finite(*t)) return false;
  return true;
}

inline bool params_finite(const Model& m) {
  for (const Tensor* t : param_tensors(m))
    if (!all_finite(*t)) return false;
  return true;
}

}  // namespace detail

// Validation metric: C-index for survival variants, balanced accuracy for
// the classification-only variant. Falls back to 0.5 when undefined.
inline double validation_metric(Model& m, const Cohort& cohort,
                                const std::vector<std::size_t>& val_idx) {
  ModelOutput out = predict(m, cohort, val_idx);
  Metrics metrics = compute_metrics(out.risk, detail::labels_of(cohort, val_idx),
                                    out.margin_logit, detail::margins_of(cohort, val_idx));
  if (has_risk_head(m.config.variant))
    return metrics.c_index.value_or(0.5);
  return metrics.balanced_accuracy.value_or(0.5);
}

inline TrainResult train(const Model& init, const Cohort& cohort,
                         const std::vector<std::size_t>& train_idx,
                         const std::vector<std::size_t>& val_idx, const TrainConfig& tc) {
  if (tc.batch_size < 2) throw config_error("train: batch_size must be >= 2");
  if (tc.max_epochs < 1) throw config_error("train: max_epochs must be >= 1");
  if (train_idx.size() < 2) throw data_error("train: need at least 2 training patients");
  if (val_idx.empty()) throw data_error("train: need a validation set");

  double pos_weight = tc.pos_weight;
  if (pos_weight <= 0.0) {
    long pos = 0, neg = 0;
    for (std::size_t i : train_idx) (cohort[i].margin ? pos : neg) += 1;
    pos_weight = (pos > 0 && neg > 0) ? pos_weight_from_counts(neg, pos) : 1.0;
  }

  TrainResult result;
  result.best = init;
  result.last = init;
  Model model = init;
  Optimizer opt(tc.optimizer, tc.learning_rate);
  result.best_val = -std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
    Rng erng(derive_seed(tc.seed, 0xe90c, epoch));
    std::vector<std::size_t> order = train_idx;
    erng.shuffle(order);

    EpochLog log;
    log.epoch = epoch;
    double loss_sum = 0.0;
    // A singleton tail cannot batch-normalize, so it is dropped for the epoch.
    for (std::size_t start = 0; start + 1 < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tc.batch_size);
      std::vector<Patient> storage;
      storage.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        if (tc.augment)
          storage.push_back(augment(cohort[order[i]], erng));
        else
          storage.push_back(cohort[order[i]]);
      }
      std::vector<const Patient*> batch;
      for (const auto& p : storage) batch.push_back(&p);

      Model grads = make_zero_grads(model);
      LossBreakdown lb;
      try {
        lb = forward_backward(model, batch, pos_weight, grads);
      } catch (const skip_batch&) {
        ++log.skipped_batches;
        continue;
      } catch (const numeric_error&) {
        result.diverged = true;
        break;
      }
      if (!std::isfinite(lb.total) || !detail::grads_finite(grads)) {
        result.diverged = true;
        break;  // abort before stepping: current params are the last finite state
      }
      opt.step(model, grads);
      if (!detail::params_finite(model)) {
        result.diverged = true;
        model = result.last;  // roll back to the last finite state
        break;
      }
      result.last = model;
      loss_sum += lb.total;
      ++log.batches;
    }
    if (result.diverged) {
      result.last = detail::params_finite(model) ? model : result.last;
      break;
    }

    log.train_loss = log.batches > 0 ? loss_sum / static_cast<double>(log.batches) : 0.0;
    log.val_metric = validation_metric(model, cohort, val_idx);
    if (log.val_metric > result.best_val) {
      result.best_val = log.val_metric;
      result.best_epoch = epoch;
      result.best = model;
      log.is_best = true;
    }
    result.log.push_back(log);
    result.last = model;
  }
  if (!std::isfinite(result.best_val)) {
    // No epoch completed (immediate divergence): fall back to the last state.
    result.best = result.last;
    result.best_val = 0.0;
  }
  return result;
}

}  // namespace cepn
