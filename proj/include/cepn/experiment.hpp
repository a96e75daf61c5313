#pragma once

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cepn/coxreg.hpp"
#include "cepn/csv.hpp"
#include "cepn/features.hpp"
#include "cepn/folds.hpp"
#include "cepn/lasso_cox.hpp"
#include "cepn/model_io.hpp"
#include "cepn/survstats.hpp"
#include "cepn/train.hpp"

namespace cepn {

// Seed tags for the per-fold streams. The leakage audit re-derives the
// selection stream from these, so they are part of the artifact contract.
inline constexpr std::uint64_t kSeedModel = 0x4d0de1;
inline constexpr std::uint64_t kSeedTrain = 0x7e41;
inline constexpr std::uint64_t kSeedSelect = 0x5e1ec7;

struct PermTest {
  double observed = 0.0, null_mean = 0.0, null_sd = 0.0, z = 0.0;
  std::size_t n_perm = 0;
};

// Label-permutation null for the C-index: shuffle the (time, event) pairs
// against fixed risk scores and locate the observed value in the null.
inline PermTest permutation_null_z(const std::vector<double>& risks,
                                   const std::vector<SurvivalLabel>& labels,
                                   std::size_t n_perm = 200, std::uint64_t seed = 0) {
  if (n_perm < 2) throw config_error("permutation_null_z: need at least 2 permutations");
  PermTest r;
  r.n_perm = n_perm;
  r.observed = c_index(risks, labels);
  Rng rng(derive_seed(seed, 0x9e47));
  std::vector<SurvivalLabel> perm = labels;
  std::vector<double> cs(n_perm);
  double sum = 0.0;
  for (std::size_t b = 0; b < n_perm; ++b) {
    rng.shuffle(perm);
    cs[b] = c_index(risks, perm);
    sum += cs[b];
  }
  r.null_mean = sum / static_cast<double>(n_perm);
  double ss = 0.0;
  for (double c : cs) ss += (c - r.null_mean) * (c - r.null_mean);
  r.null_sd = std::sqrt(ss / static_cast<double>(n_perm - 1));
  r.z = (r.observed - r.null_mean) / r.null_sd;
  return r;
}

namespace detail {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open");
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(',', start);
      if (pos == std::string::npos) {
        cells.push_back(line.substr(start));
        break;
      }
      cells.push_back(line.substr(start, pos - start));
      start = pos + 1;
    }
    if (first) {
      t.header = cells;
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  if (first) throw data_error(path + ": empty csv");
  for (const auto& r : t.rows)
    if (r.size() != t.header.size())
      throw data_error(path + ": row width " + std::to_string(r.size()) +
                       " does not match header width " + std::to_string(t.header.size()));
  return t;
}

inline std::size_t csv_column(const CsvTable& t, const std::string& name,
                              const std::string& path) {
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == name) return i;
  throw data_error(path + ": missing column '" + name + "'");
}

inline double csv_double(const std::string& s, const std::string& where) {
  if (s.empty()) throw data_error(where + ": empty numeric field");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE)
    throw data_error(where + ": bad number '" + s + "'");
  return v;
}

}  // namespace detail

struct FoldRun {
  FoldSplit split;
  Metrics metrics;  // on the test set; C-index uses normalized risks
  std::vector<double> train_risk, test_risk_raw, test_risk_norm, test_logit;
  std::vector<std::string> selected_features;
  bool selection_done = false;
  double best_val = 0.0;
  std::size_t best_epoch = 0;
  bool diverged = false;
};

// Trains one outer fold and persists everything the leakage audit needs:
// the split with labels, raw training/test risks, the normalized test risks,
// the raw training-fold feature rows, and the selection that came out of them.
inline FoldRun run_fold(const Cohort& cohort, const FoldSplit& split, const ModelConfig& mc,
                        const TrainConfig& tc_base, std::uint64_t seed,
                        const std::vector<std::vector<double>>& feats,
                        const std::vector<std::string>& feat_names,
                        const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::string base = out_dir + "/fold" + std::to_string(split.index) + "_";

  FoldRun fr;
  fr.split = split;

  Rng mrng(derive_seed(seed, kSeedModel, static_cast<std::uint64_t>(split.index)));
  Model init = make_model(mc, mrng);
  TrainConfig tc = tc_base;
  tc.seed = derive_seed(seed, kSeedTrain, static_cast<std::uint64_t>(split.index));
  TrainResult tr = train(init, cohort, split.train, split.val, tc);
  fr.best_val = tr.best_val;
  fr.best_epoch = tr.best_epoch;
  fr.diverged = tr.diverged;

  {
    CsvWriter log(base + "train_log.csv", {"epoch", "train_loss", "batches",
                                           "skipped_batches", "val_metric", "is_best"});
    for (const auto& e : tr.log)
      log.row({e.epoch, e.train_loss, e.batches, e.skipped_batches, e.val_metric,
               e.is_best ? 1 : 0});
  }
  save_checkpoint(tr.best, base + "best.cepn");

  {
    CsvWriter sw(base + "split.csv", {"patient_id", "role", "time", "event", "margin"});
    auto emit = [&](const std::vector<std::size_t>& idx, const char* role) {
      for (std::size_t i : idx)
        sw.row({cohort[i].id, role, cohort[i].survival.time, cohort[i].survival.event,
                cohort[i].margin});
    };
    emit(split.train, "train");
    emit(split.val, "val");
    emit(split.test, "test");
  }

  ModelOutput train_out = predict(tr.best, cohort, split.train);
  ModelOutput test_out = predict(tr.best, cohort, split.test);
  if (has_risk_head(mc.variant)) {
    fr.train_risk = train_out.risk;
    fr.test_risk_raw = test_out.risk;
    fr.test_risk_norm = normalize_risk_scores(fr.train_risk, fr.test_risk_raw);
  }
  if (has_margin_head(mc.variant)) fr.test_logit = test_out.margin_logit;

  {
    CsvWriter tw(base + "train_risks.csv", {"patient_id", "risk_raw"});
    for (std::size_t j = 0; j < fr.train_risk.size(); ++j)
      tw.row({cohort[split.train[j]].id, fr.train_risk[j]});
  }
  {
    CsvWriter tw(base + "test_risks.csv",
                 {"patient_id", "risk_raw", "risk_norm", "margin_logit"});
    for (std::size_t j = 0; j < split.test.size(); ++j) {
      std::optional<double> raw, norm, logit;
      if (!fr.test_risk_raw.empty()) raw = fr.test_risk_raw[j];
      if (!fr.test_risk_norm.empty()) norm = fr.test_risk_norm[j];
      if (!fr.test_logit.empty()) logit = fr.test_logit[j];
      tw.row({cohort[split.test[j]].id, raw, norm, logit});
    }
  }

  fr.metrics = compute_metrics(fr.test_risk_norm, detail::labels_of(cohort, split.test),
                               fr.test_logit, detail::margins_of(cohort, split.test));

  if (!feats.empty()) {
    {
      std::vector<std::string> hdr = {"patient_id"};
      hdr.insert(hdr.end(), feat_names.begin(), feat_names.end());
      CsvWriter fw(base + "features_train.csv", hdr);
      for (std::size_t i : split.train) {
        std::vector<CsvWriter::Cell> cells;
        cells.emplace_back(cohort[i].id);
        for (double v : feats[i]) cells.emplace_back(v);
        fw.row(cells);
      }
    }
    std::vector<std::vector<double>> xtr;
    xtr.reserve(split.train.size());
    for (std::size_t i : split.train) xtr.push_back(feats[i]);
    const auto ltr = detail::labels_of(cohort, split.train);
    try {
      const auto stats = standardize_columns(xtr);
      LassoCoxResult sel =
          lasso_cox_select(xtr, ltr, default_lambda_grid(xtr, ltr), 5,
                           derive_seed(seed, kSeedSelect, static_cast<std::uint64_t>(split.index)));
      std::vector<int> flag(feat_names.size(), 0);
      for (std::size_t j : sel.selected) flag[j] = 1;
      CsvWriter sw(base + "selection.csv", {"feature", "mean", "sd", "selected"});
      for (std::size_t j = 0; j < feat_names.size(); ++j) {
        sw.row({feat_names[j], stats.first[j], stats.second[j], flag[j]});
        if (flag[j]) fr.selected_features.push_back(feat_names[j]);
      }
      fr.selection_done = true;
    } catch (const error&) {
      // Selection infeasible on this fold (e.g. too few events for the inner
      // CV). A header-only file records that no selection was made.
      CsvWriter sw(base + "selection.csv", {"feature", "mean", "sd", "selected"});
    }
  }
  return fr;
}

struct AuditReport {
  std::size_t folds = 0;
  std::size_t normalization_checked = 0;
  std::size_t selection_checked = 0;
};

// Leakage audit over persisted fold artifacts: test folds partition the
// cohort, risk normalization is reproducible from training-fold risks alone,
// and feature selection is reproducible from training-fold feature rows alone.
inline AuditReport audit_cv_run(const std::string& dir, std::size_t k, std::uint64_t seed) {
  AuditReport rep;
  std::map<std::string, int> test_seen;
  std::set<std::string> cohort_ids;
  for (std::size_t f = 0; f < k; ++f) {
    const std::string base = dir + "/fold" + std::to_string(f) + "_";
    const std::string split_path = base + "split.csv";
    const auto split = detail::read_csv(split_path);
    const std::size_t c_id = detail::csv_column(split, "patient_id", split_path);
    const std::size_t c_role = detail::csv_column(split, "role", split_path);
    const std::size_t c_time = detail::csv_column(split, "time", split_path);
    const std::size_t c_event = detail::csv_column(split, "event", split_path);
    std::set<std::string> seen;
    std::map<std::string, std::string> role_of;
    std::map<std::string, SurvivalLabel> label_of;
    for (const auto& row : split.rows) {
      const std::string& id = row[c_id];
      if (!seen.insert(id).second)
        throw data_error("audit: fold " + std::to_string(f) + " lists patient " + id +
                         " in more than one role");
      role_of[id] = row[c_role];
      label_of[id] = {detail::csv_double(row[c_time], split_path),
                      static_cast<int>(detail::csv_double(row[c_event], split_path))};
      if (row[c_role] == "test") test_seen[id] += 1;
    }
    if (f == 0) {
      cohort_ids = seen;
    } else if (seen != cohort_ids) {
      throw data_error("audit: fold " + std::to_string(f) +
                       " does not cover the same cohort as fold 0");
    }

    const std::string tr_path = base + "train_risks.csv";
    const std::string te_path = base + "test_risks.csv";
    const auto tr = detail::read_csv(tr_path);
    const auto te = detail::read_csv(te_path);
    if (!tr.rows.empty()) {
      const std::size_t tr_id = detail::csv_column(tr, "patient_id", tr_path);
      const std::size_t tr_raw = detail::csv_column(tr, "risk_raw", tr_path);
      std::vector<double> train_raw;
      for (const auto& row : tr.rows) {
        const auto it = role_of.find(row[tr_id]);
        if (it == role_of.end() || it->second != "train")
          throw data_error("audit: " + tr_path + " contains non-training patient " +
                           row[tr_id]);
        train_raw.push_back(detail::csv_double(row[tr_raw], tr_path));
      }
      const std::size_t te_raw = detail::csv_column(te, "risk_raw", te_path);
      const std::size_t te_norm = detail::csv_column(te, "risk_norm", te_path);
      std::vector<double> test_raw, test_norm;
      for (const auto& row : te.rows) {
        test_raw.push_back(detail::csv_double(row[te_raw], te_path));
        test_norm.push_back(detail::csv_double(row[te_norm], te_path));
      }
      const auto renorm = normalize_risk_scores(train_raw, test_raw);
      for (std::size_t j = 0; j < renorm.size(); ++j)
        if (renorm[j] != test_norm[j])
          throw data_error("audit: fold " + std::to_string(f) +
                           " risk normalization is not reproducible from training-fold "
                           "artifacts (patient " +
                           te.rows[j][detail::csv_column(te, "patient_id", te_path)] + ")");
      rep.normalization_checked += 1;
    }

    const std::string sel_path = base + "selection.csv";
    if (std::filesystem::exists(sel_path)) {
      const auto selt = detail::read_csv(sel_path);
      if (!selt.rows.empty()) {
        const std::string ft_path = base + "features_train.csv";
        const auto ft = detail::read_csv(ft_path);
        if (ft.header.size() != selt.rows.size() + 1)
          throw data_error("audit: " + ft_path + " and " + sel_path +
                           " disagree on the feature count");
        std::vector<std::vector<double>> xtr;
        std::vector<SurvivalLabel> ltr;
        for (const auto& row : ft.rows) {
          const auto it = role_of.find(row[0]);
          if (it == role_of.end() || it->second != "train")
            throw data_error("audit: " + ft_path + " contains non-training patient " +
                             row[0]);
          std::vector<double> fv;
          for (std::size_t j = 1; j < row.size(); ++j)
            fv.push_back(detail::csv_double(row[j], ft_path));
          xtr.push_back(std::move(fv));
          ltr.push_back(label_of.at(row[0]));
        }
        const auto stats = standardize_columns(xtr);
        const auto sel = lasso_cox_select(
            xtr, ltr, default_lambda_grid(xtr, ltr), 5,
            derive_seed(seed, kSeedSelect, static_cast<std::uint64_t>(f)));
        std::vector<int> flag(selt.rows.size(), 0);
        for (std::size_t j : sel.selected) flag[j] = 1;
        const std::size_t c_mean = detail::csv_column(selt, "mean", sel_path);
        const std::size_t c_sd = detail::csv_column(selt, "sd", sel_path);
        const std::size_t c_sel = detail::csv_column(selt, "selected", sel_path);
        for (std::size_t j = 0; j < selt.rows.size(); ++j) {
          if (detail::csv_double(selt.rows[j][c_mean], sel_path) != stats.first[j] ||
              detail::csv_double(selt.rows[j][c_sd], sel_path) != stats.second[j])
            throw data_error("audit: fold " + std::to_string(f) +
                             " feature standardization is not reproducible from "
                             "training-fold artifacts");
          if (static_cast<int>(detail::csv_double(selt.rows[j][c_sel], sel_path)) != flag[j])
            throw data_error("audit: fold " + std::to_string(f) +
                             " feature selection is not reproducible from training-fold "
                             "artifacts");
        }
        rep.selection_checked += 1;
      }
    }
    rep.folds += 1;
  }
  for (const auto& id : cohort_ids) {
    const auto it = test_seen.find(id);
    if (it == test_seen.end() || it->second != 1)
      throw data_error("audit: patient " + id + " appears in " +
                       std::to_string(it == test_seen.end() ? 0 : it->second) +
                       " test folds; expected exactly 1");
  }
  return rep;
}

struct CvRun {
  std::vector<FoldRun> folds;
  Metrics pooled;
  std::vector<std::size_t> pooled_idx;  // cohort indices in pooled order
  std::vector<double> pooled_risk, pooled_logit;
  std::vector<std::string> majority_features;  // selected in > half the folds
};

inline CvRun cv_run(const Cohort& cohort, const ModelConfig& mc, const TrainConfig& tc,
                    int k, std::uint64_t seed, const std::string& out_dir,
                    bool with_features = true) {
  std::filesystem::create_directories(out_dir);
  std::vector<SurvivalLabel> all;
  all.reserve(cohort.size());
  for (const auto& p : cohort) all.push_back(p.survival);
  const auto folds = make_folds(all, k, seed);

  std::vector<std::vector<double>> feats;
  std::vector<std::string> feat_names;
  if (with_features) {
    feat_names = simple_feature_names(cohort.empty() ? 3 : cohort[0].volume.extent(0));
    feats.reserve(cohort.size());
    for (const auto& p : cohort) feats.push_back(simple_feature_extract(p));
  }

  CvRun cv;
  for (const auto& split : folds)
    cv.folds.push_back(run_fold(cohort, split, mc, tc, seed, feats, feat_names, out_dir));

  for (const auto& fr : cv.folds) {
    for (std::size_t j = 0; j < fr.split.test.size(); ++j) {
      cv.pooled_idx.push_back(fr.split.test[j]);
      if (!fr.test_risk_norm.empty()) cv.pooled_risk.push_back(fr.test_risk_norm[j]);
      if (!fr.test_logit.empty()) cv.pooled_logit.push_back(fr.test_logit[j]);
    }
  }
  cv.pooled = compute_metrics(cv.pooled_risk, detail::labels_of(cohort, cv.pooled_idx),
                              cv.pooled_logit, detail::margins_of(cohort, cv.pooled_idx));

  {
    CsvWriter mw(out_dir + "/metrics.csv",
                 {"fold", "n_train", "n_val", "n_test", "c_index", "balanced_accuracy",
                  "sensitivity", "specificity", "best_val", "best_epoch", "diverged"});
    for (const auto& fr : cv.folds)
      mw.row({std::to_string(fr.split.index), fr.split.train.size(), fr.split.val.size(),
              fr.split.test.size(), fr.metrics.c_index, fr.metrics.balanced_accuracy,
              fr.metrics.sensitivity, fr.metrics.specificity, fr.best_val, fr.best_epoch,
              fr.diverged ? 1 : 0});
    mw.row({"pooled", "NA", "NA", cv.pooled_idx.size(), cv.pooled.c_index,
            cv.pooled.balanced_accuracy, cv.pooled.sensitivity, cv.pooled.specificity,
            "NA", "NA", "NA"});
  }

  if (with_features) {
    std::size_t done = 0;
    std::map<std::string, std::size_t> votes;
    for (const auto& fr : cv.folds) {
      if (!fr.selection_done) continue;
      ++done;
      for (const auto& name : fr.selected_features) votes[name] += 1;
    }
    for (const auto& name : feat_names) {
      const auto it = votes.find(name);
      if (it != votes.end() && 2 * it->second > done) cv.majority_features.push_back(name);
    }
  }

  audit_cv_run(out_dir, static_cast<std::size_t>(k), seed);
  return cv;
}

struct AblationRow {
  std::string variant, metric;
  std::optional<double> mean, sd;
  std::size_t folds_ok = 0, folds_failed = 0;
};

// Runs the same folds for every variant (shared splits, per-fold seeds fixed
// by the fold index) and reduces each defined metric to mean / sample std.
// A fold that throws marks the variant's row counts but the run continues.
inline std::vector<AblationRow> run_ablation(const Cohort& cohort,
                                             const std::vector<Variant>& variants,
                                             const ModelConfig& base_mc, const TrainConfig& tc,
                                             int k, std::uint64_t seed,
                                             const std::string& out_dir) {
  if (variants.empty()) throw config_error("run_ablation: need at least one variant");
  std::filesystem::create_directories(out_dir);
  std::vector<SurvivalLabel> all;
  all.reserve(cohort.size());
  for (const auto& p : cohort) all.push_back(p.survival);
  const auto folds = make_folds(all, k, seed);

  std::vector<AblationRow> table;
  for (Variant v : variants) {
    ModelConfig mc = base_mc;
    mc.variant = v;
    mc.fusion_ch = 0;  // re-derive for this variant's branch set
    const std::string vdir = out_dir + "/" + std::string(variant_name(v));
    std::map<std::string, std::vector<double>> vals;
    std::size_t ok = 0, failed = 0;
    for (const auto& split : folds) {
      try {
        FoldRun fr = run_fold(cohort, split, mc, tc, seed, {}, {}, vdir);
        ++ok;
        if (fr.metrics.c_index) vals["c_index"].push_back(*fr.metrics.c_index);
        if (fr.metrics.balanced_accuracy)
          vals["balanced_accuracy"].push_back(*fr.metrics.balanced_accuracy);
        if (fr.metrics.sensitivity) vals["sensitivity"].push_back(*fr.metrics.sensitivity);
        if (fr.metrics.specificity) vals["specificity"].push_back(*fr.metrics.specificity);
      } catch (const error&) {
        ++failed;
      }
    }
    std::vector<std::string> metric_names;
    if (has_risk_head(v)) metric_names.push_back("c_index");
    if (has_margin_head(v)) {
      metric_names.push_back("balanced_accuracy");
      metric_names.push_back("sensitivity");
      metric_names.push_back("specificity");
    }
    for (const auto& name : metric_names) {
      AblationRow row;
      row.variant = variant_name(v);
      row.metric = name;
      row.folds_ok = ok;
      row.folds_failed = failed;
      const auto& xs = vals[name];
      if (!xs.empty()) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double ss = 0.0;
        for (double x : xs) ss += (x - mean) * (x - mean);
        row.mean = mean;
        row.sd = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
      }
      table.push_back(row);
    }
  }

  CsvWriter aw(out_dir + "/ablation.csv",
               {"variant", "metric", "mean", "std", "folds_ok", "folds_failed"});
  for (const auto& row : table)
    aw.row({row.variant, row.metric, row.mean, row.sd, row.folds_ok, row.folds_failed});
  return table;
}

struct AnalysisResult {
  std::vector<std::string> factors;
  std::vector<std::string> univariate_status;  // ok | zero_variance | failed
  std::vector<std::optional<CoxFit>> univariate;
  std::string multivariate_status;  // ok | singular | failed
  std::optional<CoxFit> multivariate;
};

namespace detail {

inline bool column_has_variance(const std::vector<double>& col) {
  for (double v : col)
    if (v != col[0]) return true;
  return false;
}

inline void cox_fit_row(CsvWriter& w, const std::string& name, const CoxFit& f,
                        std::size_t j, const char* status) {
  w.row({name, f.beta[j], f.se[j], f.hr[j], f.ci_low[j], f.ci_high[j], f.p_wald[j], status});
}

inline void cox_na_row(CsvWriter& w, const std::string& name, const char* status) {
  std::optional<double> na;
  w.row({name, na, na, na, na, na, na, status});
}

}  // namespace detail

// Univariate table (one fit per factor) and a joint multivariate table.
// Zero-variance factors are rejected per row; a singular joint information
// matrix marks the whole multivariate table instead of aborting the run.
inline AnalysisResult cox_tables(const std::vector<SurvivalLabel>& labels,
                                 const std::vector<std::string>& names,
                                 const std::vector<std::vector<double>>& cols,
                                 const std::string& out_dir) {
  if (names.size() != cols.size() || names.empty())
    throw shape_error("cox_tables: need one name per factor column");
  const std::size_t n = labels.size();
  for (const auto& col : cols)
    if (col.size() != n) throw shape_error("cox_tables: factor column length mismatch");
  std::filesystem::create_directories(out_dir);

  AnalysisResult res;
  res.factors = names;

  {
    CsvWriter uw(out_dir + "/cox_univariate.csv",
                 {"factor", "beta", "se", "hr", "ci_low", "ci_high", "p", "status"});
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (!detail::column_has_variance(cols[j])) {
        detail::cox_na_row(uw, names[j], "zero_variance");
        res.univariate_status.push_back("zero_variance");
        res.univariate.push_back(std::nullopt);
        continue;
      }
      std::vector<std::vector<double>> x(n, std::vector<double>(1));
      for (std::size_t r = 0; r < n; ++r) x[r][0] = cols[j][r];
      try {
        CoxFit f = cox_fit(x, labels);
        detail::cox_fit_row(uw, names[j], f, 0, "ok");
        res.univariate_status.push_back("ok");
        res.univariate.push_back(std::move(f));
      } catch (const error&) {
        detail::cox_na_row(uw, names[j], "failed");
        res.univariate_status.push_back("failed");
        res.univariate.push_back(std::nullopt);
      }
    }
  }

  {
    CsvWriter mw(out_dir + "/cox_multivariate.csv",
                 {"factor", "beta", "se", "hr", "ci_low", "ci_high", "p", "status"});
    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < names.size(); ++j)
      if (detail::column_has_variance(cols[j])) active.push_back(j);
    std::vector<std::vector<double>> x(n, std::vector<double>(active.size()));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t a = 0; a < active.size(); ++a) x[r][a] = cols[active[a]][r];
    try {
      CoxFit f = cox_fit(x, labels);
      std::size_t a = 0;
      for (std::size_t j = 0; j < names.size(); ++j) {
        if (a < active.size() && active[a] == j) {
          detail::cox_fit_row(mw, names[j], f, a, "ok");
          ++a;
        } else {
          detail::cox_na_row(mw, names[j], "zero_variance");
        }
      }
      res.multivariate_status = "ok";
      res.multivariate = std::move(f);
    } catch (const numeric_error&) {
      for (const auto& name : names) detail::cox_na_row(mw, name, "singular");
      res.multivariate_status = "singular";
    }
  }
  return res;
}

// Curve CSV: a t=0 anchor row (S=1, everyone at risk) followed by one row per
// distinct event time. An empty group leaves a header-only file.
inline void write_km_csv(const std::string& path, const std::vector<SurvivalLabel>& ls) {
  CsvWriter kw(path, {"time", "survival", "at_risk", "events"});
  if (ls.empty()) return;
  kw.row({0.0, 1.0, ls.size(), 0});
  const KmCurve km = kaplan_meier(ls);
  for (std::size_t t = 0; t < km.event_times.size(); ++t)
    kw.row({km.event_times[t], km.survival[t], km.at_risk[t], km.n_events[t]});
}

// Post-hoc analysis over the pooled test-fold outputs: per-factor and joint
// Cox tables, and Kaplan-Meier curves for the median-split signature overall
// and within each resection-margin subgroup, with log-rank tests.
inline AnalysisResult run_analysis(const Cohort& cohort, const std::vector<std::size_t>& idx,
                                   const std::vector<double>& signature,
                                   const std::vector<std::string>& feature_factors,
                                   const std::string& out_dir) {
  if (idx.empty() || idx.size() != signature.size())
    throw shape_error("run_analysis: signature must align one-to-one with patient indices");
  std::filesystem::create_directories(out_dir);

  const auto labels = detail::labels_of(cohort, idx);
  const auto margins = detail::margins_of(cohort, idx);

  std::vector<std::string> names = {"signature", "margin"};
  std::vector<std::vector<double>> cols;
  cols.push_back(signature);
  {
    std::vector<double> m(margins.begin(), margins.end());
    cols.push_back(m);
  }
  if (!feature_factors.empty()) {
    const std::size_t phases = cohort[idx[0]].volume.extent(0);
    const auto all_names = simple_feature_names(phases);
    std::vector<std::size_t> want;
    for (const auto& f : feature_factors) {
      const auto it = std::find(all_names.begin(), all_names.end(), f);
      if (it == all_names.end())
        throw config_error("run_analysis: unknown feature factor '" + f + "'");
      want.push_back(static_cast<std::size_t>(it - all_names.begin()));
    }
    std::vector<std::vector<double>> rows;
    rows.reserve(idx.size());
    for (std::size_t i : idx) {
      const auto fv = simple_feature_extract(cohort[i]);
      std::vector<double> r;
      for (std::size_t w : want) r.push_back(fv[w]);
      rows.push_back(std::move(r));
    }
    standardize_columns(rows);  // descriptive scaling over the pooled set
    for (std::size_t j = 0; j < want.size(); ++j) {
      names.push_back(feature_factors[j]);
      std::vector<double> col(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) col[r] = rows[r][j];
      cols.push_back(std::move(col));
    }
  }

  AnalysisResult res = cox_tables(labels, names, cols, out_dir);

  const std::vector<int> group = median_stratify(signature);  // 1 = high score
  CsvWriter lw(out_dir + "/logrank.csv",
               {"subgroup", "n_low", "n_high", "chi2", "p", "status"});
  const char* subgroups[3] = {"all", "r0", "r1"};
  for (int s = 0; s < 3; ++s) {
    std::vector<SurvivalLabel> low, high;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (s == 1 && margins[r] != 0) continue;
      if (s == 2 && margins[r] != 1) continue;
      (group[r] ? high : low).push_back(labels[r]);
    }
    write_km_csv(out_dir + "/km_" + subgroups[s] + "_low.csv", low);
    write_km_csv(out_dir + "/km_" + subgroups[s] + "_high.csv", high);
    std::optional<double> na;
    try {
      const LogRankResult lr = log_rank_test(low, high);
      lw.row({subgroups[s], low.size(), high.size(), lr.chi2, lr.p, "ok"});
    } catch (const shape_error&) {
      lw.row({subgroups[s], low.size(), high.size(), na, na, "empty_arm"});
    } catch (const numeric_error&) {
      lw.row({subgroups[s], low.size(), high.size(), na, na, "no_events"});
    }
  }
  return res;
}

}  // namespace cepn
