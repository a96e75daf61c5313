#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "cepn/coxreg.hpp"
#include "cepn/rng.hpp"

namespace cepn {

namespace detail {

// Mean-scaled gradient and curvature of the negative log partial likelihood
// along one coordinate, at the current linear predictors.
inline void lasso_coord_terms(const std::vector<std::vector<double>>& x, std::size_t k,
                              const std::vector<SurvivalLabel>& labels,
                              const std::vector<std::size_t>& order,
                              const std::vector<double>& eta, double& g, double& h) {
  const std::size_t n = order.size();
  double mx = -std::numeric_limits<double>::infinity();
  for (double e : eta) mx = std::max(mx, e);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  g = 0.0;
  h = 0.0;
  std::size_t pos = 0;
  while (pos < n) {
    const double t = labels[order[pos]].time;
    std::size_t next = pos;
    while (next < n && labels[order[next]].time == t) {
      const std::size_t j = order[next];
      const double w = std::exp(eta[j] - mx);
      const double xj = x[j][k];
      s0 += w;
      s1 += w * xj;
      s2 += w * xj * xj;
      ++next;
    }
    for (std::size_t q = pos; q < next; ++q) {
      const std::size_t i = order[q];
      if (!labels[i].event) continue;
      const double mu = s1 / s0;
      g += mu - x[i][k];
      h += s2 / s0 - mu * mu;
    }
    pos = next;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  g *= inv_n;
  h *= inv_n;
}

inline double soft_threshold(double z, double lam) {
  if (z > lam) return z - lam;
  if (z < -lam) return z + lam;
  return 0.0;
}

// Cyclic coordinate descent for (1/n)·negative log partial likelihood +
// lambda·||beta||_1, warm-started from the supplied beta.
inline void lasso_cox_solve(const std::vector<std::vector<double>>& x,
                            const std::vector<SurvivalLabel>& labels,
                            const std::vector<std::size_t>& order, double lambda,
                            std::vector<double>& beta, std::vector<double>& eta) {
  const std::size_t n = x.size(), p = beta.size();
  for (int cycle = 0; cycle < 2000; ++cycle) {
    double max_delta = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      double g, h;
      lasso_coord_terms(x, k, labels, order, eta, g, h);
      if (!(h > 1e-12)) continue;  // no curvature (e.g. constant column)
      const double z = h * beta[k] - g;
      const double next = soft_threshold(z, lambda) / h;
      const double delta = next - beta[k];
      if (delta != 0.0) {
        beta[k] = next;
        for (std::size_t i = 0; i < n; ++i) eta[i] += delta * x[i][k];
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < 1e-9) break;
  }
}

}  // namespace detail

// Smallest lambda at which every coordinate stays at zero, from the gradient
// at beta = 0.
inline double lasso_lambda_max(const std::vector<std::vector<double>>& x,
                               const std::vector<SurvivalLabel>& labels) {
  const std::size_t n = x.size();
  if (n == 0) throw shape_error("lasso_lambda_max: empty design");
  const std::size_t p = x[0].size();
  const auto order = detail::desc_time_order(labels);
  std::vector<double> eta(n, 0.0);
  double lmax = 0.0;
  for (std::size_t k = 0; k < p; ++k) {
    double g, h;
    detail::lasso_coord_terms(x, k, labels, order, eta, g, h);
    lmax = std::max(lmax, std::abs(g));
  }
  return lmax;
}

// 50 log-spaced values from lambda_max down to ratio·lambda_max.
inline std::vector<double> default_lambda_grid(const std::vector<std::vector<double>>& x,
                                               const std::vector<SurvivalLabel>& labels,
                                               std::size_t count = 50,
                                               double ratio = 1e-3) {
  const double lmax = lasso_lambda_max(x, labels);
  if (!(lmax > 0.0)) throw numeric_error("default_lambda_grid: zero gradient at beta=0");
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double frac = count == 1 ? 0.0
                                   : static_cast<double>(i) / static_cast<double>(count - 1);
    grid[i] = lmax * std::pow(ratio, frac);
  }
  return grid;
}

struct LassoCoxResult {
  std::vector<double> lambdas;             // descending
  std::vector<std::vector<double>> path;   // beta per lambda (full data)
  std::vector<double> cv_loglik;           // summed held-out log partial likelihood
  std::size_t chosen = 0;                  // index into lambdas
  std::vector<std::size_t> selected;       // nonzero support at the chosen lambda
};

// Event-stratified fold assignment so every fold sees events.
inline std::vector<int> stratified_folds(const std::vector<SurvivalLabel>& labels,
                                         int n_folds, Rng& rng) {
  std::vector<std::size_t> ev, cen;
  for (std::size_t i = 0; i < labels.size(); ++i)
    (labels[i].event ? ev : cen).push_back(i);
  rng.shuffle(ev);
  rng.shuffle(cen);
  std::vector<int> fold(labels.size(), 0);
  for (std::size_t i = 0; i < ev.size(); ++i) fold[ev[i]] = static_cast<int>(i % n_folds);
  for (std::size_t i = 0; i < cen.size(); ++i) fold[cen[i]] = static_cast<int>(i % n_folds);
  return fold;
}

// L1-penalized Cox path over a descending lambda grid with warm starts;
// lambda picked by cross-validated held-out partial likelihood.
inline LassoCoxResult lasso_cox_select(const std::vector<std::vector<double>>& x,
                                       const std::vector<SurvivalLabel>& labels,
                                       std::vector<double> lambdas, int n_folds = 5,
                                       std::uint64_t seed = 0) {
  if (lambdas.empty()) throw config_error("lasso_cox_select: empty lambda grid");
  const std::size_t n = x.size();
  if (n == 0 || n != labels.size())
    throw shape_error("lasso_cox_select: design rows must match labels");
  const std::size_t p = x[0].size();
  std::sort(lambdas.begin(), lambdas.end(), std::greater<double>());

  LassoCoxResult res;
  res.lambdas = lambdas;

  // Full-data path.
  const auto order = detail::desc_time_order(labels);
  std::vector<double> beta(p, 0.0), eta(n, 0.0);
  for (double lam : lambdas) {
    detail::lasso_cox_solve(x, labels, order, lam, beta, eta);
    res.path.push_back(beta);
  }

  // Cross-validated held-out partial likelihood per lambda.
  Rng rng(derive_seed(seed, 0x1a550c0));
  const auto fold = stratified_folds(labels, n_folds, rng);
  res.cv_loglik.assign(lambdas.size(), 0.0);
  for (int f = 0; f < n_folds; ++f) {
    std::vector<std::vector<double>> xtr, xte;
    std::vector<SurvivalLabel> ltr, lte;
    for (std::size_t i = 0; i < n; ++i) {
      if (fold[i] == f) {
        xte.push_back(x[i]);
        lte.push_back(labels[i]);
      } else {
        xtr.push_back(x[i]);
        ltr.push_back(labels[i]);
      }
    }
    if (xtr.empty() || xte.empty()) continue;
    std::size_t test_events = 0;
    for (const auto& l : lte) test_events += l.event ? 1 : 0;
    if (test_events == 0) continue;
    const auto otr = detail::desc_time_order(ltr);
    const auto ote = detail::desc_time_order(lte);
    std::vector<double> b(p, 0.0), e(xtr.size(), 0.0);
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      detail::lasso_cox_solve(xtr, ltr, otr, lambdas[li], b, e);
      std::vector<double> eta_te(xte.size(), 0.0);
      for (std::size_t i = 0; i < xte.size(); ++i)
        for (std::size_t k = 0; k < p; ++k) eta_te[i] += b[k] * xte[i][k];
      res.cv_loglik[li] += detail::cox_loglik_eta(eta_te, lte, ote);
    }
  }

  res.chosen = 0;
  for (std::size_t li = 1; li < lambdas.size(); ++li)
    if (res.cv_loglik[li] > res.cv_loglik[res.chosen]) res.chosen = li;
  for (std::size_t k = 0; k < p; ++k)
    if (res.path[res.chosen][k] != 0.0) res.selected.push_back(k);
  return res;
}

}  // namespace cepn
