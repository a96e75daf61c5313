#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cepn/data.hpp"
#include "cepn/error.hpp"

namespace cepn {

// Hand-crafted stand-in for the radiomics pipeline: per-phase first-order
// intensity statistics inside the tumor and in the pancreas rim around it,
// plus mask-derived shape features. Order is fixed: for each phase
// {tumor mean, tumor sd, p10, p50, p90, rim mean, rim sd, contrast index},
// then {volume fraction, surface fraction, infiltration fraction}.
inline std::vector<std::string> simple_feature_names(std::size_t phases = 3) {
  std::vector<std::string> names;
  for (std::size_t ph = 1; ph <= phases; ++ph) {
    const std::string p = "ph" + std::to_string(ph) + "_";
    for (const char* s : {"tumor_mean", "tumor_sd", "tumor_p10", "tumor_p50", "tumor_p90",
                          "rim_mean", "rim_sd", "contrast"})
      names.push_back(p + s);
  }
  names.push_back("shape_volume_frac");
  names.push_back("shape_surface_frac");
  names.push_back("shape_infiltration_frac");
  return names;
}

namespace detail {

// Linear-interpolated percentile of a sorted sample.
inline double percentile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

inline void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size()));
}

}  // namespace detail

inline std::vector<double> simple_feature_extract(const Patient& patient) {
  const Tensor& vol = patient.volume;
  if (vol.ndim() != 5)
    throw shape_error("simple_feature_extract: need [phases,channels,z,y,x], got " +
                      vol.shape_str());
  const std::size_t phases = vol.shape()[0], channels = vol.shape()[1];
  if (channels != 3)
    throw shape_error("simple_feature_extract: need 3 channels (CT, tumor, pancreas)");
  const std::size_t d = vol.shape()[2], h = vol.shape()[3], w = vol.shape()[4];
  const std::size_t spatial = d * h * w;
  auto plane = [&](std::size_t ph, std::size_t ch) {
    return vol.data() + (ph * channels + ch) * spatial;
  };

  // Masks are shared across phases; read them from phase 0.
  const double* tumor = plane(0, 1);
  const double* panc = plane(0, 2);
  std::size_t tumor_count = 0;
  for (std::size_t v = 0; v < spatial; ++v) tumor_count += tumor[v] > 0.5 ? 1 : 0;
  if (tumor_count == 0) throw data_error("simple_feature_extract: empty tumor mask");

  std::vector<double> feat;
  feat.reserve(phases * 8 + 3);
  for (std::size_t ph = 0; ph < phases; ++ph) {
    const double* ct = plane(ph, 0);
    std::vector<double> tvals, rvals;
    tvals.reserve(tumor_count);
    for (std::size_t v = 0; v < spatial; ++v) {
      if (tumor[v] > 0.5)
        tvals.push_back(ct[v]);
      else if (panc[v] > 0.5)
        rvals.push_back(ct[v]);
    }
    double tmean, tsd, rmean, rsd;
    detail::mean_sd(tvals, tmean, tsd);
    detail::mean_sd(rvals, rmean, rsd);
    std::sort(tvals.begin(), tvals.end());
    feat.push_back(tmean);
    feat.push_back(tsd);
    feat.push_back(detail::percentile_sorted(tvals, 0.10));
    feat.push_back(detail::percentile_sorted(tvals, 0.50));
    feat.push_back(detail::percentile_sorted(tvals, 0.90));
    feat.push_back(rmean);
    feat.push_back(rsd);
    feat.push_back((tmean - rmean) / (std::abs(tmean) + std::abs(rmean) + 1e-12));
  }

  // Shape features from the shared masks.
  std::size_t surface = 0, outside = 0;
  auto at = [&](const double* m, long z, long y, long x) {
    if (z < 0 || y < 0 || x < 0 || z >= static_cast<long>(d) || y >= static_cast<long>(h) ||
        x >= static_cast<long>(w))
      return 0.0;
    return m[(static_cast<std::size_t>(z) * h + static_cast<std::size_t>(y)) * w +
             static_cast<std::size_t>(x)];
  };
  for (std::size_t z = 0; z < d; ++z)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t v = (z * h + y) * w + x;
        if (tumor[v] <= 0.5) continue;
        if (panc[v] <= 0.5) ++outside;
        const long zl = static_cast<long>(z), yl = static_cast<long>(y),
                   xl = static_cast<long>(x);
        if (at(tumor, zl - 1, yl, xl) <= 0.5 || at(tumor, zl + 1, yl, xl) <= 0.5 ||
            at(tumor, zl, yl - 1, xl) <= 0.5 || at(tumor, zl, yl + 1, xl) <= 0.5 ||
            at(tumor, zl, yl, xl - 1) <= 0.5 || at(tumor, zl, yl, xl + 1) <= 0.5)
          ++surface;
      }
  feat.push_back(static_cast<double>(tumor_count) / static_cast<double>(spatial));
  feat.push_back(static_cast<double>(surface) / static_cast<double>(tumor_count));
  feat.push_back(static_cast<double>(outside) / static_cast<double>(tumor_count));
  return feat;
}

}  // namespace cepn
