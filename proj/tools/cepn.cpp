#include <cstdio>
#include <filesystem>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cepn/cepn.hpp"

namespace {

cepn::ModelConfig model_config_from(const cepn::Config& cfg, const cepn::Cohort& cohort) {
  cepn::ModelConfig mc;
  if (!cohort.empty()) {
    mc.phases = cohort[0].volume.extent(0);
    mc.input_extent = cohort[0].volume.extent(2);
  }
  mc.variant = cepn::variant_from_string(
      cfg.get_string("variant", cepn::variant_name(mc.variant)));
  mc.encoder_width =
      static_cast<std::size_t>(cfg.get_int("encoder_width", static_cast<long>(mc.encoder_width)));
  mc.hidden_ch =
      static_cast<std::size_t>(cfg.get_int("hidden_ch", static_cast<long>(mc.hidden_ch)));
  mc.input_extent =
      static_cast<std::size_t>(cfg.get_int("input_extent", static_cast<long>(mc.input_extent)));
  mc.loss_weight_margin = cfg.get_double("loss_weight_margin", mc.loss_weight_margin);
  mc.pool_states = cfg.get_bool("pool_states", mc.pool_states);
  return mc;
}

cepn::TrainConfig train_config_from(const cepn::Config& cfg, std::uint64_t seed) {
  cepn::TrainConfig tc;
  tc.batch_size = static_cast<std::size_t>(cfg.get_int("batch_size", 8));
  tc.max_epochs = static_cast<std::size_t>(cfg.get_int("max_epochs", 50));
  tc.learning_rate = cfg.get_double("learning_rate", 1e-3);
  tc.optimizer = cepn::optimizer_from_string(cfg.get_string("optimizer", "adam"));
  tc.augment = cfg.get_bool("augment", true);
  tc.pos_weight = cfg.get_double("pos_weight", 0.0);
  tc.seed = seed;
  return tc;
}

std::vector<cepn::SurvivalLabel> cohort_labels(const cepn::Cohort& cohort) {
  std::vector<cepn::SurvivalLabel> out;
  out.reserve(cohort.size());
  for (const auto& p : cohort) out.push_back(p.survival);
  return out;
}

void write_train_log(const std::string& path, const cepn::TrainResult& tr) {
  cepn::CsvWriter log(path, {"epoch", "train_loss", "batches", "skipped_batches",
                             "val_metric", "is_best"});
  for (const auto& e : tr.log)
    log.row({e.epoch, e.train_loss, e.batches, e.skipped_batches, e.val_metric,
             e.is_best ? 1 : 0});
}

void cmd_phantom_gen(const cepn::Config& cfg, std::uint64_t seed) {
  cepn::PhantomParams p;
  p.n_patients = static_cast<int>(cfg.get_int("n_patients", p.n_patients));
  p.extent = static_cast<int>(cfg.get_int("extent", p.extent));
  p.attenuation_effect = cfg.get_double("attenuation_effect", p.attenuation_effect);
  p.margin_effect = cfg.get_double("margin_effect", p.margin_effect);
  p.censoring_rate = cfg.get_double("censoring_rate", p.censoring_rate);
  p.base_hazard = cfg.get_double("base_hazard", p.base_hazard);
  p.noise_sigma = cfg.get_double("noise_sigma", p.noise_sigma);
  p.seed = seed;
  const std::string out = cfg.require_string("out_dir");
  const cepn::Cohort cohort = cepn::generate_cohort(p);
  std::filesystem::create_directories(out);
  cepn::write_dataset(cohort, out);
  int events = 0, r1 = 0;
  for (const auto& pt : cohort) {
    events += pt.survival.event;
    r1 += pt.margin;
  }
  std::printf("wrote %zu patients (%d events, %d R1) to %s\n", cohort.size(), events, r1,
              out.c_str());
}

void cmd_train(const cepn::Config& cfg, std::uint64_t seed) {
  const std::string data = cfg.require_string("data_dir");
  const std::string out = cfg.require_string("out_dir");
  const cepn::Cohort cohort = cepn::read_dataset(data);
  const cepn::ModelConfig mc = model_config_from(cfg, cohort);
  const cepn::TrainConfig tc = train_config_from(cfg, seed);
  const double vf = cfg.get_double("val_fraction", 0.25);

  const cepn::HoldoutSplit split = cepn::holdout_split(cohort_labels(cohort), vf, seed);
  cepn::Rng mrng(cepn::derive_seed(seed, cepn::kSeedModel));
  const cepn::Model init = cepn::make_model(mc, mrng);
  cepn::TrainResult tr = cepn::train(init, cohort, split.train, split.val, tc);

  std::filesystem::create_directories(out);
  write_train_log(out + "/train_log.csv", tr);
  cepn::save_checkpoint(tr.best, out + "/best.cepn");
  cepn::save_checkpoint(tr.last, out + "/last.cepn");
  std::printf("%s: best val %.4f at epoch %zu over %zu epochs%s\n",
              cepn::variant_name(mc.variant), tr.best_val, tr.best_epoch, tr.log.size(),
              tr.diverged ? " (diverged; last finite state kept)" : "");
}

void cmd_eval(const cepn::Config& cfg) {
  const std::string ckpt = cfg.require_string("checkpoint");
  const std::string data = cfg.require_string("data_dir");
  const std::string out = cfg.require_string("out_dir");
  cepn::Model m = cepn::load_checkpoint(ckpt);
  const cepn::Cohort cohort = cepn::read_dataset(data);
  std::vector<std::size_t> idx(cohort.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  const cepn::ModelOutput o = cepn::predict(m, cohort, idx);
  const cepn::Metrics met =
      cepn::compute_metrics(o.risk, cohort_labels(cohort),
                            o.margin_logit, cepn::detail::margins_of(cohort, idx));
  std::filesystem::create_directories(out);
  cepn::CsvWriter w(out + "/metrics.csv",
                    {"n", "c_index", "balanced_accuracy", "sensitivity", "specificity"});
  w.row({cohort.size(), met.c_index, met.balanced_accuracy, met.sensitivity,
         met.specificity});
  std::printf("n=%zu c_index=%s balanced_accuracy=%s\n", cohort.size(),
              met.c_index ? cepn::detail::fmt_double(*met.c_index).c_str() : "NA",
              met.balanced_accuracy ? cepn::detail::fmt_double(*met.balanced_accuracy).c_str()
                                    : "NA");
}

void cmd_cv_run(const cepn::Config& cfg, std::uint64_t seed) {
  const std::string data = cfg.require_string("data_dir");
  const std::string out = cfg.require_string("out_dir");
  const cepn::Cohort cohort = cepn::read_dataset(data);
  const cepn::ModelConfig mc = model_config_from(cfg, cohort);
  const cepn::TrainConfig tc = train_config_from(cfg, seed);
  const int k = static_cast<int>(cfg.get_int("k", 3));
  const bool features = cfg.get_bool("features", true);
  const std::size_t n_perm = static_cast<std::size_t>(cfg.get_int("n_perm", 200));

  const cepn::CvRun cv = cepn::cv_run(cohort, mc, tc, k, seed, out, features);
  if (!cv.pooled_risk.empty()) {
    cepn::run_analysis(cohort, cv.pooled_idx, cv.pooled_risk, cv.majority_features, out);
    const cepn::PermTest pt = cepn::permutation_null_z(
        cv.pooled_risk, cepn::detail::labels_of(cohort, cv.pooled_idx), n_perm, seed);
    cepn::CsvWriter pw(out + "/permutation.csv",
                       {"observed", "null_mean", "null_sd", "z", "n_perm"});
    pw.row({pt.observed, pt.null_mean, pt.null_sd, pt.z, pt.n_perm});
    std::printf("pooled c_index %.4f (permutation z = %.2f)\n", pt.observed, pt.z);
  }
  if (cv.pooled.balanced_accuracy)
    std::printf("pooled balanced_accuracy %.4f\n", *cv.pooled.balanced_accuracy);
}

void cmd_ablation(const cepn::Config& cfg, std::uint64_t seed) {
  const std::string data = cfg.require_string("data_dir");
  const std::string out = cfg.require_string("out_dir");
  const cepn::Cohort cohort = cepn::read_dataset(data);
  const cepn::ModelConfig mc = model_config_from(cfg, cohort);
  const cepn::TrainConfig tc = train_config_from(cfg, seed);
  const int k = static_cast<int>(cfg.get_int("k", 3));

  std::vector<cepn::Variant> variants;
  std::string list =
      cfg.get_string("variants", "multi_task_ce_convlstm,early_fusion_resnet");
  std::size_t start = 0;
  while (start <= list.size()) {
    std::size_t pos = list.find(',', start);
    if (pos == std::string::npos) pos = list.size();
    const std::string name = list.substr(start, pos - start);
    if (!name.empty()) variants.push_back(cepn::variant_from_string(name));
    start = pos + 1;
  }

  const auto table = cepn::run_ablation(cohort, variants, mc, tc, k, seed, out);
  for (const auto& row : table)
    std::printf("%-24s %-18s mean=%s std=%s (%zu ok, %zu failed)\n", row.variant.c_str(),
                row.metric.c_str(),
                row.mean ? cepn::detail::fmt_double(*row.mean).c_str() : "NA",
                row.sd ? cepn::detail::fmt_double(*row.sd).c_str() : "NA", row.folds_ok,
                row.folds_failed);
}

// Factor table from a flat CSV: `time`, `event`, and any number of factor
// columns (a `patient_id` column is ignored).
void load_factor_csv(const std::string& path, std::vector<cepn::SurvivalLabel>& labels,
                     std::vector<std::string>& names,
                     std::vector<std::vector<double>>& cols) {
  const cepn::detail::CsvTable t = cepn::detail::read_csv(path);
  const std::size_t c_time = cepn::detail::csv_column(t, "time", path);
  const std::size_t c_event = cepn::detail::csv_column(t, "event", path);
  for (const auto& row : t.rows)
    labels.push_back({cepn::detail::csv_double(row[c_time], path),
                      static_cast<int>(cepn::detail::csv_double(row[c_event], path))});
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (j == c_time || j == c_event || t.header[j] == "patient_id") continue;
    names.push_back(t.header[j]);
    std::vector<double> col;
    col.reserve(t.rows.size());
    for (const auto& row : t.rows) col.push_back(cepn::detail::csv_double(row[j], path));
    cols.push_back(std::move(col));
  }
}

void cmd_stats_cox(const cepn::Config& cfg) {
  const std::string input = cfg.require_string("input_csv");
  const std::string out = cfg.require_string("out_dir");
  std::vector<cepn::SurvivalLabel> labels;
  std::vector<std::string> names;
  std::vector<std::vector<double>> cols;
  load_factor_csv(input, labels, names, cols);
  if (names.empty()) throw cepn::data_error(input + ": no factor columns");
  const cepn::AnalysisResult res = cepn::cox_tables(labels, names, cols, out);
  std::printf("%zu factors; multivariate %s\n", names.size(),
              res.multivariate_status.c_str());
}

void cmd_stats_km(const cepn::Config& cfg) {
  const std::string input = cfg.require_string("input_csv");
  const std::string out = cfg.require_string("out_dir");
  const cepn::detail::CsvTable t = cepn::detail::read_csv(input);
  const std::size_t c_time = cepn::detail::csv_column(t, "time", input);
  const std::size_t c_event = cepn::detail::csv_column(t, "event", input);
  const std::size_t c_group = cepn::detail::csv_column(t, "group", input);

  std::map<std::string, std::vector<cepn::SurvivalLabel>> groups;
  for (const auto& row : t.rows)
    groups[row[c_group]].push_back(
        {cepn::detail::csv_double(row[c_time], input),
         static_cast<int>(cepn::detail::csv_double(row[c_event], input))});
  if (groups.empty()) throw cepn::data_error(input + ": no rows");

  std::filesystem::create_directories(out);
  for (const auto& [name, labels] : groups)
    cepn::write_km_csv(out + "/km_" + name + ".csv", labels);
  if (groups.size() == 2) {
    const auto a = groups.begin();
    const auto b = std::next(a);
    cepn::CsvWriter lw(out + "/logrank.csv",
                       {"group_a", "group_b", "n_a", "n_b", "chi2", "p", "status"});
    std::optional<double> na;
    try {
      const cepn::LogRankResult lr = cepn::log_rank_test(a->second, b->second);
      lw.row({a->first, b->first, a->second.size(), b->second.size(), lr.chi2, lr.p, "ok"});
      std::printf("log-rank %s vs %s: chi2 %.4f p %.4g\n", a->first.c_str(),
                  b->first.c_str(), lr.chi2, lr.p);
    } catch (const cepn::numeric_error&) {
      lw.row({a->first, b->first, a->second.size(), b->second.size(), na, na, "no_events"});
    }
  }
  std::printf("wrote %zu KM curves to %s\n", groups.size(), out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-phase CT survival modeling toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> cli_seed;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key = value config file");
    sub->add_option("--seed", cli_seed, "seed override (wins over the config file)");
  };

  CLI::App* phantom = app.add_subcommand("phantom", "synthetic cohort tools");
  phantom->require_subcommand(1);
  CLI::App* pgen = phantom->add_subcommand("gen", "generate a phantom cohort dataset");
  add_common(pgen);
  CLI::App* train = app.add_subcommand("train", "train one model with a holdout split");
  add_common(train);
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  add_common(eval);
  CLI::App* cv = app.add_subcommand("cv", "cross-validation");
  cv->require_subcommand(1);
  CLI::App* cvrun = cv->add_subcommand("run", "nested CV with pooled analysis and audit");
  add_common(cvrun);
  CLI::App* ablation = app.add_subcommand("ablation", "variant comparison on shared folds");
  add_common(ablation);
  CLI::App* stats = app.add_subcommand("stats", "survival statistics over CSV inputs");
  stats->require_subcommand(1);
  CLI::App* scox = stats->add_subcommand("cox", "Cox regression tables from a factor CSV");
  add_common(scox);
  CLI::App* skm = stats->add_subcommand("km", "Kaplan-Meier curves and log-rank from a CSV");
  add_common(skm);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const cepn::Config cfg =
        config_path.empty() ? cepn::Config() : cepn::Config::load(config_path);
    const std::uint64_t cfg_seed = cfg.get_u64("seed", 0);
    const std::uint64_t seed = cli_seed ? *cli_seed : cfg_seed;

    if (pgen->parsed()) cmd_phantom_gen(cfg, seed);
    else if (train->parsed()) cmd_train(cfg, seed);
    else if (eval->parsed()) cmd_eval(cfg);
    else if (cvrun->parsed()) cmd_cv_run(cfg, seed);
    else if (ablation->parsed()) cmd_ablation(cfg, seed);
    else if (scox->parsed()) cmd_stats_cox(cfg);
    else if (skm->parsed()) cmd_stats_km(cfg);
    cfg.reject_unknown();
  } catch (const cepn::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const cepn::data_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const cepn::numeric_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 4;
  } catch (const cepn::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
