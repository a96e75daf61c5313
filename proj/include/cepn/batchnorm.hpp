#pragma once

#include <cmath>
#include <vector>

#include "cepn/tensor.hpp"

namespace cepn {

enum class BnMode { train, eval };

// Per-channel batch normalization over [n, ch, ...] tensors. Batch variance
// is the biased estimator (divide by count).
struct BatchNorm {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

inline BatchNorm make_batchnorm(std::size_t ch) {
  BatchNorm bn;
  bn.gamma = Tensor::full({ch}, 1.0);
  bn.beta = Tensor::zeros({ch});
  bn.running_mean = Tensor::zeros({ch});
  bn.running_var = Tensor::full({ch}, 1.0);
  return bn;
}

// Cache of one train-mode forward, needed by the backward pass.
struct BnCache {
  Tensor xhat;
  std::vector<double> inv_std;
  std::size_t count = 0;  // n * spatial elements per channel
};

inline Tensor batchnorm_forward(const Tensor& input, BatchNorm& layer, BnMode mode,
                                BnCache* cache = nullptr) {
  if (input.ndim() < 2)
    throw shape_error("batchnorm: need [n, ch, ...], got " + input.shape_str());
  const std::size_t n = input.shape()[0];
  const std::size_t ch = input.shape()[1];
  if (ch != layer.gamma.size())
    throw shape_error("batchnorm: input has " + std::to_string(ch) +
                      " channels, layer has " + std::to_string(layer.gamma.size()));
  std::size_t spatial = 1;
  for (std::size_t a = 2; a < input.ndim(); ++a) spatial *= input.shape()[a];

  Tensor out(input.shape());
  if (mode == BnMode::train) {
    if (n < 2)
      throw shape_error("batchnorm: train mode needs batch size >= 2, got " +
                        std::to_string(n));
    const std::size_t count = n * spatial;
    if (cache) {
      cache->xhat = Tensor(input.shape());
      cache->inv_std.assign(ch, 0.0);
      cache->count = count;
    }
    for (std::size_t c = 0; c < ch; ++c) {
      double mean = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* x = input.data() + (b * ch + c) * spatial;
        for (std::size_t v = 0; v < spatial; ++v) mean += x[v];
      }
      mean /= static_cast<double>(count);
      double var = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* x = input.data() + (b * ch + c) * spatial;
        for (std::size_t v = 0; v < spatial; ++v) var += (x[v] - mean) * (x[v] - mean);
      }
      var /= static_cast<double>(count);
      const double inv_std = 1.0 / std::sqrt(var + layer.epsilon);
      const double g = layer.gamma[c], bt = layer.beta[c];
      for (std::size_t b = 0; b < n; ++b) {
        const double* x = input.data() + (b * ch + c) * spatial;
        double* y = out.data() + (b * ch + c) * spatial;
        double* xh = cache ? cache->xhat.data() + (b * ch + c) * spatial : nullptr;
        for (std::size_t v = 0; v < spatial; ++v) {
          const double h = (x[v] - mean) * inv_std;
          if (xh) xh[v] = h;
          y[v] = g * h + bt;
        }
      }
      if (cache) cache->inv_std[c] = inv_std;
      layer.running_mean[c] =
          (1.0 - layer.momentum) * layer.running_mean[c] + layer.momentum * mean;
      layer.running_var[c] =
          (1.0 - layer.momentum) * layer.running_var[c] + layer.momentum * var;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      const double inv_std = 1.0 / std::sqrt(layer.running_var[c] + layer.epsilon);
      const double g = layer.gamma[c], bt = layer.beta[c], m = layer.running_mean[c];
      for (std::size_t b = 0; b < n; ++b) {
        const double* x = input.data() + (b * ch + c) * spatial;
        double* y = out.data() + (b * ch + c) * spatial;
        for (std::size_t v = 0; v < spatial; ++v) y[v] = g * (x[v] - m) * inv_std + bt;
      }
    }
  }
  return out;
}

// Train-mode backward. Accumulates parameter gradients, writes grad_input.
inline void batchnorm_backward(const Tensor& grad_out, const BnCache& cache,
                               const BatchNorm& layer, Tensor& grad_input,
                               Tensor& grad_gamma, Tensor& grad_beta) {
  if (cache.count == 0) throw shape_error("batchnorm_backward: missing forward cache");
  require_same_shape(grad_out, cache.xhat, "batchnorm_backward grad_out");
  require_same_shape(grad_input, cache.xhat, "batchnorm_backward grad_input");
  const std::size_t n = grad_out.shape()[0];
  const std::size_t ch = grad_out.shape()[1];
  std::size_t spatial = 1;
  for (std::size_t a = 2; a < grad_out.ndim(); ++a) spatial *= grad_out.shape()[a];
  const double m = static_cast<double>(cache.count);

  for (std::size_t c = 0; c < ch; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const double* g = grad_out.data() + (b * ch + c) * spatial;
      const double* xh = cache.xhat.data() + (b * ch + c) * spatial;
      for (std::size_t v = 0; v < spatial; ++v) {
        sum_g += g[v];
        sum_gx += g[v] * xh[v];
      }
    }
    grad_beta[c] += sum_g;
    grad_gamma[c] += sum_gx;
    const double k = layer.gamma[c] * cache.inv_std[c] / m;
    for (std::size_t b = 0; b < n; ++b) {
      const double* g = grad_out.data() + (b * ch + c) * spatial;
      const double* xh = cache.xhat.data() + (b * ch + c) * spatial;
      double* gi = grad_input.data() + (b * ch + c) * spatial;
      for (std::size_t v = 0; v < spatial; ++v)
        gi[v] = k * (m * g[v] - sum_g - xh[v] * sum_gx);
    }
  }
}

}  // namespace cepn
