#pragma once

#include <algorithm>
#include <vector>

#include "cepn/data.hpp"
#include "cepn/error.hpp"
#include "cepn/rng.hpp"

namespace cepn {

struct FoldSplit {
  int index = 0;
  std::vector<std::size_t> train, val, test;
};

// Nested k-fold splits: round-robin test assignment stratified by event
// indicator, then a validation share carved out of each fold's remainder,
// also stratified. Fully determined by (labels, k, seed).
inline std::vector<FoldSplit> make_folds(const std::vector<SurvivalLabel>& labels, int k,
                                         std::uint64_t seed, double val_fraction = 0.25) {
  if (k < 2) throw config_error("make_folds: k must be >= 2");
  const std::size_t n = labels.size();
  if (n < 2 * static_cast<std::size_t>(k))
    throw data_error("make_folds: need at least 2k patients, got " + std::to_string(n));
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
    throw config_error("make_folds: val_fraction must be in (0, 1)");

  std::vector<std::size_t> ev, cen;
  for (std::size_t i = 0; i < n; ++i) (labels[i].event ? ev : cen).push_back(i);
  if (ev.size() < static_cast<std::size_t>(k))
    throw data_error("make_folds: only " + std::to_string(ev.size()) +
                     " events for k = " + std::to_string(k) + " stratified folds");
  Rng rng(derive_seed(seed, 0xf01d5));
  rng.shuffle(ev);
  rng.shuffle(cen);

  std::vector<int> assignment(n, 0);
  for (std::size_t i = 0; i < ev.size(); ++i) assignment[ev[i]] = static_cast<int>(i % k);
  for (std::size_t i = 0; i < cen.size(); ++i) assignment[cen[i]] = static_cast<int>(i % k);

  std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    FoldSplit& split = folds[static_cast<std::size_t>(f)];
    split.index = f;
    std::vector<std::size_t> rest_ev, rest_cen;
    for (std::size_t i = 0; i < n; ++i) {
      if (assignment[i] == f) {
        split.test.push_back(i);
      } else {
        (labels[i].event ? rest_ev : rest_cen).push_back(i);
      }
    }
    Rng frng(derive_seed(seed, 0xf01d5 + 1, static_cast<std::uint64_t>(f)));
    frng.shuffle(rest_ev);
    frng.shuffle(rest_cen);
    const std::size_t val_ev = static_cast<std::size_t>(
        static_cast<double>(rest_ev.size()) * val_fraction + 0.5);
    const std::size_t val_cen = static_cast<std::size_t>(
        static_cast<double>(rest_cen.size()) * val_fraction + 0.5);
    if (val_ev == 0 || val_ev == rest_ev.size())
      throw data_error("make_folds: too few events to carve a stratified validation set");
    for (std::size_t i = 0; i < rest_ev.size(); ++i)
      (i < val_ev ? split.val : split.train).push_back(rest_ev[i]);
    for (std::size_t i = 0; i < rest_cen.size(); ++i)
      (i < val_cen ? split.val : split.train).push_back(rest_cen[i]);
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
  }
  return folds;
}

// Single event-stratified train/validation split for standalone training.
struct HoldoutSplit {
  std::vector<std::size_t> train, val;
};

inline HoldoutSplit holdout_split(const std::vector<SurvivalLabel>& labels,
                                  double val_fraction, std::uint64_t seed) {
  const std::size_t n = labels.size();
  if (n < 4) throw data_error("holdout_split: need at least 4 patients");
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
    throw config_error("holdout_split: val_fraction must be in (0, 1)");
  std::vector<std::size_t> ev, cen;
  for (std::size_t i = 0; i < n; ++i) (labels[i].event ? ev : cen).push_back(i);
  Rng rng(derive_seed(seed, 0xf01d5 + 2));
  rng.shuffle(ev);
  rng.shuffle(cen);
  const std::size_t val_ev =
      static_cast<std::size_t>(static_cast<double>(ev.size()) * val_fraction + 0.5);
  const std::size_t val_cen =
      static_cast<std::size_t>(static_cast<double>(cen.size()) * val_fraction + 0.5);
  if (val_ev == 0 || val_ev == ev.size())
    throw data_error("holdout_split: too few events to carve a stratified validation set");
  HoldoutSplit split;
  for (std::size_t i = 0; i < ev.size(); ++i)
    (i < val_ev ? split.val : split.train).push_back(ev[i]);
  for (std::size_t i = 0; i < cen.size(); ++i)
    (i < val_cen ? split.val : split.train).push_back(cen[i]);
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

}  // namespace cepn
