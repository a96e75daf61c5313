#include <catch2/catch_amalgamated.hpp>

#include "cepn/coxreg.hpp"
#include "cepn/lasso_cox.hpp"
#include "oracles.hpp"

using Catch::Approx;
using namespace cepn;

namespace {

std::vector<double> column(const std::vector<std::vector<double>>& x, std::size_t k) {
  std::vector<double> c(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) c[i] = x[i][k];
  return c;
}

}  // namespace

TEST_CASE("cox fit: matches 1-D grid maximizer") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    std::vector<std::vector<double>> x;
    std::vector<SurvivalLabel> labels;
    oracle::sim_exponential(40, 0.8, 0.25, seed, x, labels);
    CoxFit fit = cox_fit(x, labels);
    REQUIRE(fit.converged);
    const double grid = oracle::grid_max_cox_1d(column(x, 0), labels);
    REQUIRE(fit.beta[0] == Approx(grid).margin(1e-4));
  }
}

TEST_CASE("cox fit: recovers a moderate effect") {
  std::vector<std::vector<double>> x;
  std::vector<SurvivalLabel> labels;
  oracle::sim_exponential(500, 1.0, 0.3, 31, x, labels);
  CoxFit fit = cox_fit(x, labels);
  REQUIRE(fit.converged);
  REQUIRE(std::fabs(fit.beta[0] - 1.0) < 0.25);
  REQUIRE(fit.hr[0] == Approx(std::exp(fit.beta[0])).margin(1e-12));
  REQUIRE(fit.ci_low[0] < fit.hr[0]);
  REQUIRE(fit.ci_high[0] > fit.hr[0]);
  REQUIRE(fit.p_wald[0] < 1e-4);
}

TEST_CASE("cox fit: zero-variance column is frozen, not fit") {
  std::vector<std::vector<double>> x;
  std::vector<SurvivalLabel> labels;
  oracle::sim_exponential(60, 0.9, 0.2, 41, x, labels);
  std::vector<std::vector<double>> with_const = x;
  for (auto& row : with_const) row.push_back(2.5);

  CoxFit plain = cox_fit(x, labels);
  CoxFit frozen = cox_fit(with_const, labels);
  REQUIRE(frozen.beta[1] == 0.0);
  REQUIRE(frozen.hr[1] == 1.0);
  REQUIRE(frozen.p_wald[1] == 1.0);
  REQUIRE(frozen.beta[0] == Approx(plain.beta[0]).margin(1e-12));
  REQUIRE(frozen.se[0] == Approx(plain.se[0]).margin(1e-12));

  // All-constant design: nothing to optimize, null model returned.
  std::vector<std::vector<double>> consts(10, std::vector<double>{1.0});
  std::vector<SurvivalLabel> small(labels.begin(), labels.begin() + 10);
  CoxFit null_fit = cox_fit(consts, small);
  REQUIRE(null_fit.converged);
  REQUIRE(null_fit.beta[0] == 0.0);
}

TEST_CASE("cox fit: input validation") {
  std::vector<std::vector<double>> x{{1.0}, {0.0}, {1.0}};
  std::vector<SurvivalLabel> labels{{1.0, 1}, {2.0, 1}, {3.0, 0}};
  REQUIRE_THROWS_AS(cox_fit({}, {}), shape_error);
  REQUIRE_THROWS_AS(cox_fit(x, {labels[0], labels[1]}), shape_error);
  std::vector<std::vector<double>> ragged{{1.0}, {0.0, 1.0}, {1.0}};
  REQUIRE_THROWS_AS(cox_fit(ragged, labels), shape_error);

  std::vector<std::vector<double>> wide{{1.0, 0.0}, {0.0, 1.0}};
  REQUIRE_THROWS_AS(cox_fit(wide, {labels[0], labels[1]}), numeric_error);

  std::vector<SurvivalLabel> censored{{1.0, 0}, {2.0, 0}, {3.0, 0}};
  REQUIRE_THROWS_AS(cox_fit(x, censored), numeric_error);
}

TEST_CASE("lasso: lambda_max zeroes every coefficient") {
  std::vector<std::vector<double>> x;
  std::vector<SurvivalLabel> labels;
  oracle::sim_exponential(80, 1.0, 0.25, 51, x, labels);
  const double lmax = lasso_lambda_max(x, labels);
  REQUIRE(lmax > 0.0);
  LassoCoxResult res = lasso_cox_select(x, labels, {lmax, 2.0 * lmax}, 3, 7);
  REQUIRE(res.lambdas == std::vector<double>{2.0 * lmax, lmax});
  for (const auto& beta : res.path)
    for (double b : beta) REQUIRE(b == 0.0);
}

TEST_CASE("lasso: unpenalized solution matches the Newton fit") {
  std::vector<std::vector<double>> x;
  std::vector<SurvivalLabel> labels;
  oracle::sim_exponential(60, 0.8, 0.25, 61, x, labels);
  CoxFit fit = cox_fit(x, labels);
  LassoCoxResult res = lasso_cox_select(x, labels, {0.0}, 3, 7);
  REQUIRE(res.path[0][0] == Approx(fit.beta[0]).margin(1e-4));
}

TEST_CASE("lasso: default grid shape") {
  std::vector<std::vector<double>> x;
  std::vector<SurvivalLabel> labels;
  oracle::sim_exponential(50, 1.0, 0.25, 71, x, labels);
  const auto grid = default_lambda_grid(x, labels);
  REQUIRE(grid.size() == 50);
  REQUIRE(grid.front() == Approx(lasso_lambda_max(x, labels)).margin(1e-12));
  REQUIRE(grid.back() == Approx(1e-3 * grid.front()).margin(1e-12 * grid.front()));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    REQUIRE(grid[i] < grid[i - 1]);
    // log-spacing: constant ratio between consecutive points
    REQUIRE(grid[i] / grid[i - 1] == Approx(grid[1] / grid[0]).margin(1e-12));
  }

  std::vector<std::vector<double>> flat(10, std::vector<double>{3.0});
  std::vector<SurvivalLabel> small(labels.begin(), labels.begin() + 10);
  REQUIRE_THROWS_AS(default_lambda_grid(flat, small), numeric_error);
}

TEST_CASE("lasso: finds planted support among noise") {
  Rng rng(81);
  const std::size_t n = 150, p = 10;
  std::vector<std::vector<double>> x(n, std::vector<double>(p));
  std::vector<SurvivalLabel> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p; ++k) x[i][k] = rng.normal();
    const double lh = 1.2 * x[i][0] - 1.2 * x[i][1];
    const double t = -std::log(1.0 - rng.uniform()) / (0.05 * std::exp(lh));
    labels[i] = {t, 1};
    if (rng.bernoulli(0.2)) labels[i] = {t * rng.uniform(), 0};
  }
  LassoCoxResult res = lasso_cox_select(x, labels, default_lambda_grid(x, labels), 5, 3);
  REQUIRE(std::count(res.selected.begin(), res.selected.end(), 0u) == 1);
  REQUIRE(std::count(res.selected.begin(), res.selected.end(), 1u) == 1);
  // Penalised support stays sparse and matches the path at the chosen lambda.
  REQUIRE(res.selected.size() < p);
  for (std::size_t k : res.selected) REQUIRE(res.path[res.chosen][k] != 0.0);

  // Same seed reproduces the selection.
  LassoCoxResult again = lasso_cox_select(x, labels, default_lambda_grid(x, labels), 5, 3);
  REQUIRE(again.chosen == res.chosen);
  REQUIRE(again.selected == res.selected);
}

TEST_CASE("lasso: support does not shrink as lambda drops to zero") {
  std::vector<std::vector<double>> x;
  std::vector<SurvivalLabel> labels;
  oracle::sim_exponential(60, 1.0, 0.25, 91, x, labels);
  const double lmax = lasso_lambda_max(x, labels);
  LassoCoxResult res = lasso_cox_select(x, labels, {lmax, 0.3 * lmax, 0.0}, 3, 7);
  auto support = [](const std::vector<double>& b) {
    return std::count_if(b.begin(), b.end(), [](double v) { return v != 0.0; });
  };
  REQUIRE(support(res.path[0]) == 0);
  REQUIRE(support(res.path[2]) >= support(res.path[0]));
}

TEST_CASE("lasso: input validation") {
  std::vector<std::vector<double>> x{{1.0}, {0.0}};
  std::vector<SurvivalLabel> labels{{1.0, 1}, {2.0, 0}};
  REQUIRE_THROWS_AS(lasso_cox_select(x, labels, {}, 3, 0), config_error);
  REQUIRE_THROWS_AS(lasso_cox_select(x, {labels[0]}, {0.1}, 3, 0), shape_error);
}

TEST_CASE("stratified folds spread events evenly") {
  std::vector<SurvivalLabel> labels(20);
  for (std::size_t i = 0; i < 20; ++i) labels[i] = {1.0 + i, i < 10 ? 1 : 0};
  Rng rng(101);
  const auto fold = stratified_folds(labels, 5, rng);
  std::vector<int> ev(5, 0), total(5, 0);
  for (std::size_t i = 0; i < 20; ++i) {
    total[fold[i]] += 1;
    if (labels[i].event) ev[fold[i]] += 1;
  }
  for (int f = 0; f < 5; ++f) {
    REQUIRE(ev[f] == 2);
    REQUIRE(total[f] == 4);
  }
}
