#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cepn/data.hpp"
#include "cepn/error.hpp"
#include "cepn/linalg.hpp"

namespace cepn {

struct CoxFit {
  std::vector<double> beta, se, hr, ci_low, ci_high, p_wald;
  bool converged = false;
  int n_iter = 0;
  double loglik = 0.0;
};

namespace detail {

// Indices sorted by descending time so risk sets grow as a running prefix.
inline std::vector<std::size_t> desc_time_order(const std::vector<SurvivalLabel>& labels) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return labels[a].time > labels[b].time;
  });
  return order;
}

// Log partial likelihood at linear predictors eta (Breslow risk sets).
inline double cox_loglik_eta(const std::vector<double>& eta,
                             const std::vector<SurvivalLabel>& labels,
                             const std::vector<std::size_t>& order) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double e : eta) mx = std::max(mx, e);
  double s0 = 0.0, ll = 0.0;
  std::size_t pos = 0;
  const std::size_t n = order.size();
  while (pos < n) {
    const double t = labels[order[pos]].time;
    std::size_t next = pos;
    while (next < n && labels[order[next]].time == t) {
      s0 += std::exp(eta[order[next]] - mx);
      ++next;
    }
    for (std::size_t q = pos; q < next; ++q) {
      const std::size_t i = order[q];
      if (labels[i].event) ll += eta[i] - mx - std::log(s0);
    }
    pos = next;
  }
  return ll;
}

}  // namespace detail

// Newton-Raphson maximization of the Cox partial likelihood with step-halving.
// Zero-variance covariates are frozen at beta = 0 (HR 1, p 1) rather than fed
// to the solver; a singular information matrix on the active columns throws.
inline CoxFit cox_fit(const std::vector<std::vector<double>>& x,
                      const std::vector<SurvivalLabel>& labels) {
  const std::size_t n = x.size();
  if (n == 0 || n != labels.size())
    throw shape_error("cox_fit: covariate rows (" + std::to_string(n) +
                      ") must match labels (" + std::to_string(labels.size()) + ")");
  const std::size_t p = x[0].size();
  for (const auto& row : x)
    if (row.size() != p) throw shape_error("cox_fit: ragged covariate matrix");
  if (n <= p) throw numeric_error("cox_fit: need n > p (" + std::to_string(n) + " <= " +
                                  std::to_string(p) + ")");
  std::size_t events = 0;
  for (const auto& l : labels) events += l.event ? 1 : 0;
  if (events == 0) throw numeric_error("cox_fit: no events");

  // Active columns = those with any variation.
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < p; ++k) {
    double lo = x[0][k], hi = x[0][k];
    for (std::size_t i = 1; i < n; ++i) {
      lo = std::min(lo, x[i][k]);
      hi = std::max(hi, x[i][k]);
    }
    if (hi > lo) active.push_back(k);
  }
  const std::size_t pa = active.size();

  const auto order = detail::desc_time_order(labels);
  std::vector<double> beta_a(pa, 0.0), eta(n, 0.0);
  auto compute_eta = [&](const std::vector<double>& b) {
    for (std::size_t i = 0; i < n; ++i) {
      double e = 0.0;
      for (std::size_t k = 0; k < pa; ++k) e += b[k] * x[i][active[k]];
      eta[i] = e;
    }
  };

  compute_eta(beta_a);
  double ll = detail::cox_loglik_eta(eta, labels, order);
  CoxFit fit;
  fit.converged = pa == 0;  // nothing to optimize
  std::vector<double> info(pa * pa, 0.0);

  std::vector<double> grad(pa), s1(pa), s2(pa * pa), mu(pa);
  for (int iter = 0; iter < 100 && pa > 0; ++iter) {
    // One descending-time sweep accumulates gradient and information.
    std::fill(grad.begin(), grad.end(), 0.0);
    std::fill(info.begin(), info.end(), 0.0);
    std::fill(s1.begin(), s1.end(), 0.0);
    std::fill(s2.begin(), s2.end(), 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (double e : eta) mx = std::max(mx, e);
    double s0 = 0.0;
    std::size_t pos = 0;
    while (pos < n) {
      const double t = labels[order[pos]].time;
      std::size_t next = pos;
      while (next < n && labels[order[next]].time == t) {
        const std::size_t j = order[next];
        const double w = std::exp(eta[j] - mx);
        s0 += w;
        for (std::size_t a = 0; a < pa; ++a) {
          const double xa = x[j][active[a]];
          s1[a] += w * xa;
          for (std::size_t b = a; b < pa; ++b) s2[a * pa + b] += w * xa * x[j][active[b]];
        }
        ++next;
      }
      for (std::size_t q = pos; q < next; ++q) {
        const std::size_t i = order[q];
        if (!labels[i].event) continue;
        for (std::size_t a = 0; a < pa; ++a) mu[a] = s1[a] / s0;
        for (std::size_t a = 0; a < pa; ++a) {
          grad[a] += x[i][active[a]] - mu[a];
          for (std::size_t b = a; b < pa; ++b)
            info[a * pa + b] += s2[a * pa + b] / s0 - mu[a] * mu[b];
        }
      }
      pos = next;
    }
    for (std::size_t a = 0; a < pa; ++a)
      for (std::size_t b = 0; b < a; ++b) info[a * pa + b] = info[b * pa + a];

    auto l = cholesky(info, pa, "cox_fit");
    auto step = cholesky_solve(l, pa, grad);

    // Step-halving keeps the log-likelihood non-decreasing.
    double alpha = 1.0;
    std::vector<double> cand(pa);
    double ll_new = ll;
    bool improved = false;
    for (int h = 0; h < 40; ++h) {
      for (std::size_t k = 0; k < pa; ++k) cand[k] = beta_a[k] + alpha * step[k];
      compute_eta(cand);
      ll_new = detail::cox_loglik_eta(eta, labels, order);
      if (ll_new >= ll) {
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    fit.n_iter = iter + 1;
    if (!improved) {
      compute_eta(beta_a);  // restore
      break;
    }
    double max_step = 0.0;
    for (std::size_t k = 0; k < pa; ++k)
      max_step = std::max(max_step, std::abs(alpha * step[k]));
    beta_a = cand;
    ll = ll_new;
    if (max_step < 1e-9) {
      fit.converged = true;
      break;
    }
  }

  // Standard errors from the observed information at the solution.
  std::vector<double> se_a(pa, 0.0);
  if (pa > 0) {
    compute_eta(beta_a);
    // Recompute information at the final beta.
    std::fill(info.begin(), info.end(), 0.0);
    std::fill(s1.begin(), s1.end(), 0.0);
    std::fill(s2.begin(), s2.end(), 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (double e : eta) mx = std::max(mx, e);
    double s0 = 0.0;
    std::size_t pos = 0;
    while (pos < n) {
      const double t = labels[order[pos]].time;
      std::size_t next = pos;
      while (next < n && labels[order[next]].time == t) {
        const std::size_t j = order[next];
        const double w = std::exp(eta[j] - mx);
        s0 += w;
        for (std::size_t a = 0; a < pa; ++a) {
          const double xa = x[j][active[a]];
          s1[a] += w * xa;
          for (std::size_t b = a; b < pa; ++b) s2[a * pa + b] += w * xa * x[j][active[b]];
        }
        ++next;
      }
      for (std::size_t q = pos; q < next; ++q) {
        if (!labels[order[q]].event) continue;
        for (std::size_t a = 0; a < pa; ++a) mu[a] = s1[a] / s0;
        for (std::size_t a = 0; a < pa; ++a)
          for (std::size_t b = a; b < pa; ++b)
            info[a * pa + b] += s2[a * pa + b] / s0 - mu[a] * mu[b];
      }
      pos = next;
    }
    for (std::size_t a = 0; a < pa; ++a)
      for (std::size_t b = 0; b < a; ++b) info[a * pa + b] = info[b * pa + a];
    auto l = cholesky(info, pa, "cox_fit (standard errors)");
    auto inv = cholesky_inverse(l, pa);
    for (std::size_t a = 0; a < pa; ++a) se_a[a] = std::sqrt(std::max(inv[a * pa + a], 0.0));
  }

  fit.loglik = ll;
  fit.beta.assign(p, 0.0);
  fit.se.assign(p, 0.0);
  fit.hr.assign(p, 1.0);
  fit.ci_low.assign(p, 1.0);
  fit.ci_high.assign(p, 1.0);
  fit.p_wald.assign(p, 1.0);
  for (std::size_t a = 0; a < pa; ++a) {
    const std::size_t k = active[a];
    fit.beta[k] = beta_a[a];
    fit.se[k] = se_a[a];
    fit.hr[k] = std::exp(beta_a[a]);
    fit.ci_low[k] = std::exp(beta_a[a] - 1.96 * se_a[a]);
    fit.ci_high[k] = std::exp(beta_a[a] + 1.96 * se_a[a]);
    fit.p_wald[k] = se_a[a] > 0.0 ? normal_two_sided_p(beta_a[a] / se_a[a]) : 1.0;
  }
  return fit;
}

}  // namespace cepn
