#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "cepn/data.hpp"
#include "cepn/error.hpp"
#include "cepn/rng.hpp"
#include "cepn/tensor.hpp"

namespace cepn {

struct PhantomParams {
  int n_patients = 200;
  int extent = 16;
  double attenuation_effect = 1.5;  // log-hazard per unit iso-ness u
  double margin_effect = 1.5;       // log-hazard for R1
  double censoring_rate = 0.3;
  double base_hazard = 1.0 / 24.0;  // per month
  double noise_sigma = 8.0;         // HU
  std::uint64_t seed = 0;
};

namespace phantomc {
// Generator constants (documented, not exposed as parameters).
inline constexpr double u_power = 0.18;          // pushes iso-ness toward the extremes
inline constexpr double r1_attempt_scale = 0.80; // P(infiltration attempt) = scale*(1-u)
inline constexpr double infiltration_threshold = 0.05;
inline constexpr double confounder_sigma = 28.0; // shared phase-2/3 HU shift per patient
inline constexpr double window_lo = -100.0, window_hi = 200.0;
inline constexpr std::array<double, 3> pancreas_hu = {60.0, 130.0, 105.0};
inline constexpr std::uint64_t stream_tag = 0xc0407;  // per-patient seed stream
}  // namespace phantomc

namespace detail {

struct Ellipsoid {
  std::array<double, 3> center, semi;
  bool contains(double z, double y, double x) const {
    const double dz = (z - center[0]) / semi[0];
    const double dy = (y - center[1]) / semi[1];
    const double dx = (x - center[2]) / semi[2];
    return dz * dz + dy * dy + dx * dx <= 1.0;
  }
  // Distance from the center to the surface along unit direction d.
  double boundary_distance(const std::array<double, 3>& d) const {
    double q = 0.0;
    for (int i = 0; i < 3; ++i) q += (d[i] / semi[i]) * (d[i] / semi[i]);
    return 1.0 / std::sqrt(q);
  }
};

}  // namespace detail

// Latent iso-ness: u-shaped so most patients are clearly hypo or clearly iso.
// First draw of the per-patient stream, so it is recomputable for calibration
// checks without threading truth through the data model.
inline double latent_u(double w) {
  return 0.5 * (1.0 + (w < 0 ? -1.0 : 1.0) * std::pow(std::abs(w), phantomc::u_power));
}

// Generator truth accessor: the planted iso-ness of patient `index`. Test and
// audit use only; nothing in the training path reads it.
inline double phantom_latent_u(const PhantomParams& p, int index) {
  Rng rng(derive_seed(p.seed, phantomc::stream_tag, static_cast<std::uint64_t>(index)));
  return latent_u(rng.uniform(-1.0, 1.0));
}

// One patient, fully determined by its own rng. Draw order is part of the
// determinism contract; do not reorder.
inline Patient generate_patient(const PhantomParams& p, int index, Rng& rng) {
  const int s = p.extent;
  const double sd = static_cast<double>(s);

  const double w = rng.uniform(-1.0, 1.0);
  const double u = latent_u(w);
  const double confounder = rng.normal(0.0, phantomc::confounder_sigma);

  detail::Ellipsoid pancreas;
  for (int i = 0; i < 3; ++i) pancreas.center[i] = 0.5 * sd + rng.uniform(-0.05 * sd, 0.05 * sd);
  for (int i = 0; i < 3; ++i) pancreas.semi[i] = rng.uniform(0.30 * sd, 0.40 * sd);

  detail::Ellipsoid tumor;
  for (int i = 0; i < 3; ++i) tumor.semi[i] = rng.uniform(0.10 * sd, 0.16 * sd);

  // Aggressive (low-u) tumors infiltrate the gland boundary more often; this
  // couples margin status to the attenuation signal the way the clinical
  // story does (infiltrative growth in hypo-attenuating tumors).
  const bool attempt = rng.bernoulli(phantomc::r1_attempt_scale * (1.0 - u));
  std::array<double, 3> dir{};
  double norm = 0.0;
  while (norm < 1e-6) {
    for (int i = 0; i < 3; ++i) dir[i] = rng.normal();
    norm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
  }
  for (int i = 0; i < 3; ++i) dir[i] /= norm;
  const double rb = pancreas.boundary_distance(dir);
  const double delta = attempt ? rng.uniform(0.95, 1.10) : rng.uniform(0.0, 0.45);
  for (int i = 0; i < 3; ++i) {
    tumor.center[i] = pancreas.center[i] + delta * rb * dir[i];
    tumor.center[i] = std::clamp(tumor.center[i], 0.12 * sd, 0.88 * sd);
  }

  // Survival: exponential with planted log-hazard; uniform censoring.
  const double uT = 1.0 - rng.uniform();  // (0, 1]
  const double cens_draw = rng.uniform();
  const double cens_frac = 1.0 - rng.uniform();

  // Rasterize masks.
  const std::size_t su = static_cast<std::size_t>(s);
  const std::size_t spatial = su * su * su;
  std::vector<double> tmask(spatial, 0.0), pmask(spatial, 0.0);
  std::size_t tumor_count = 0, outside = 0;
  for (std::size_t z = 0; z < su; ++z)
    for (std::size_t y = 0; y < su; ++y)
      for (std::size_t x = 0; x < su; ++x) {
        const double zc = z + 0.5, yc = y + 0.5, xc = x + 0.5;
        const std::size_t v = (z * su + y) * su + x;
        const bool in_t = tumor.contains(zc, yc, xc);
        const bool in_p = pancreas.contains(zc, yc, xc);
        if (in_t) {
          tmask[v] = 1.0;
          ++tumor_count;
          if (!in_p) ++outside;
        }
        if (in_p) pmask[v] = 1.0;
      }
  if (tumor_count == 0) {
    // Clamped center voxel is always in-grid; mark it so the mask is never empty.
    const std::size_t cz = static_cast<std::size_t>(std::clamp(tumor.center[0], 0.0, sd - 1.0));
    const std::size_t cy = static_cast<std::size_t>(std::clamp(tumor.center[1], 0.0, sd - 1.0));
    const std::size_t cx = static_cast<std::size_t>(std::clamp(tumor.center[2], 0.0, sd - 1.0));
    const std::size_t v = (cz * su + cy) * su + cx;
    tmask[v] = 1.0;
    tumor_count = 1;
    if (pmask[v] <= 0.5) outside = 1;
  }
  const double infil = static_cast<double>(outside) / static_cast<double>(tumor_count);
  const int margin = infil > phantomc::infiltration_threshold ? 1 : 0;

  const double log_hazard = -p.attenuation_effect * u + p.margin_effect * margin;
  const double hazard = p.base_hazard * std::exp(log_hazard);
  double t_true = -std::log(uT) / hazard;
  t_true = std::max(t_true, 1e-9);
  SurvivalLabel label;
  if (cens_draw < p.censoring_rate) {
    label.event = 0;
    label.time = t_true * cens_frac;
  } else {
    label.event = 1;
    label.time = t_true;
  }
  label.time = std::max(label.time, 1e-9);

  // Phase contrasts: everyone is hypo in phase 2; phase 3 recovers toward
  // iso/hyper as u -> 1. The confounder shifts phases 2 and 3 together so a
  // single late phase cannot reveal u by itself.
  const std::array<double, 3> tumor_contrast = {
      -5.0, -55.0 + confounder, (-45.0 + 50.0 * u) + confounder};

  Patient patient;
  patient.id = "p" + std::to_string(index);
  patient.volume = Tensor::zeros({3, 3, su, su, su});
  patient.survival = label;
  patient.margin = margin;
  double* base = patient.volume.data();
  for (int ph = 0; ph < 3; ++ph) {
    double* ct = base + (static_cast<std::size_t>(ph) * 3 + 0) * spatial;
    double* mt = base + (static_cast<std::size_t>(ph) * 3 + 1) * spatial;
    double* mp = base + (static_cast<std::size_t>(ph) * 3 + 2) * spatial;
    for (std::size_t v = 0; v < spatial; ++v) {
      mt[v] = tmask[v];
      mp[v] = pmask[v];
    }
    double sum = 0.0, sum2 = 0.0;
    std::size_t fg = 0;
    for (std::size_t v = 0; v < spatial; ++v) {
      const double noise = rng.normal(0.0, p.noise_sigma);
      if (tmask[v] <= 0.5 && pmask[v] <= 0.5) continue;  // background stays 0
      double hu = phantomc::pancreas_hu[ph];
      if (tmask[v] > 0.5) hu += tumor_contrast[ph];
      hu += noise;
      hu = std::clamp(hu, phantomc::window_lo, phantomc::window_hi);
      ct[v] = hu;
      sum += hu;
      sum2 += hu * hu;
      ++fg;
    }
    if (fg > 0) {
      const double mean = sum / static_cast<double>(fg);
      const double var = std::max(sum2 / static_cast<double>(fg) - mean * mean, 0.0);
      const double inv_sd = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
      for (std::size_t v = 0; v < spatial; ++v)
        if (tmask[v] > 0.5 || pmask[v] > 0.5) ct[v] = (ct[v] - mean) * inv_sd;
    }
  }
  return patient;
}

inline Cohort generate_cohort(const PhantomParams& p) {
  if (p.extent < 8) throw config_error("phantom: extent must be >= 8");
  if (p.n_patients < 2) throw config_error("phantom: need at least 2 patients");
  if (p.censoring_rate < 0.0 || p.censoring_rate >= 1.0)
    throw config_error("phantom: censoring_rate must be in [0, 1)");
  if (!(p.base_hazard > 0.0)) throw config_error("phantom: base_hazard must be positive");
  if (p.noise_sigma < 0.0) throw config_error("phantom: noise_sigma must be non-negative");
  Cohort cohort;
  cohort.reserve(static_cast<std::size_t>(p.n_patients));
  for (int i = 0; i < p.n_patients; ++i) {
    Rng rng(derive_seed(p.seed, phantomc::stream_tag, static_cast<std::uint64_t>(i)));
    cohort.push_back(generate_patient(p, i, rng));
  }
  return cohort;
}

// --- Augmentation ------------------------------------------------------

struct AugmentSpec {
  int rot_quarter = 0;             // axial (y,x) quarter turns, 0..3
  bool flip_x = false;
  std::array<int, 3> shift = {0, 0, 0};  // (z, y, x), zero-fill
};

inline Tensor apply_augment(const Tensor& vol, const AugmentSpec& a) {
  if (vol.ndim() != 5) throw shape_error("augment: need 5-d volume, got " + vol.shape_str());
  const std::size_t np = vol.shape()[0], nc = vol.shape()[1], d = vol.shape()[2],
                    h = vol.shape()[3], wd = vol.shape()[4];
  if (h != wd) throw shape_error("augment: axial rotation needs square (y,x) extents");
  Tensor out(vol.shape());
  const long dl = static_cast<long>(d), hl = static_cast<long>(h), wl = static_cast<long>(wd);
  for (std::size_t pc = 0; pc < np * nc; ++pc) {
    const double* src = vol.data() + pc * d * h * wd;
    double* dst = out.data() + pc * d * h * wd;
    for (long z = 0; z < dl; ++z)
      for (long y = 0; y < hl; ++y)
        for (long x = 0; x < wl; ++x) {
          // Walk the output voxel back through shift -> flip -> rotation.
          long sz = z - a.shift[0], sy = y - a.shift[1], sx = x - a.shift[2];
          double val = 0.0;
          if (sz >= 0 && sz < dl && sy >= 0 && sy < hl && sx >= 0 && sx < wl) {
            if (a.flip_x) sx = wl - 1 - sx;
            long ry = sy, rx = sx;
            switch (a.rot_quarter & 3) {
              case 1: ry = sx; rx = hl - 1 - sy; break;
              case 2: ry = hl - 1 - sy; rx = wl - 1 - sx; break;
              case 3: ry = wl - 1 - sx; rx = sy; break;
              default: break;
            }
            val = src[(static_cast<std::size_t>(sz) * h + static_cast<std::size_t>(ry)) * wd +
                      static_cast<std::size_t>(rx)];
          }
          dst[(static_cast<std::size_t>(z) * h + static_cast<std::size_t>(y)) * wd +
              static_cast<std::size_t>(x)] = val;
        }
  }
  return out;
}

inline AugmentSpec random_augment_spec(std::size_t extent, Rng& rng) {
  AugmentSpec a;
  a.rot_quarter = static_cast<int>(rng.index(4));
  a.flip_x = rng.bernoulli(0.5);
  const int max_shift = static_cast<int>(extent / 10);
  for (int i = 0; i < 3; ++i) a.shift[i] = rng.range(-max_shift, max_shift);
  return a;
}

inline Patient augment(const Patient& patient, Rng& rng) {
  Patient out = patient;
  out.volume = apply_augment(patient.volume, random_augment_spec(patient.volume.shape()[4], rng));
  return out;
}

}  // namespace cepn
