#pragma once

#include <cmath>

#include "cepn/rng.hpp"
#include "cepn/tensor.hpp"

namespace cepn {

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

enum class Act { sigmoid, tanh, relu };

inline Tensor activation(const Tensor& x, Act kind) {
  Tensor y(x.shape());
  switch (kind) {
    case Act::sigmoid:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
      break;
    case Act::relu:
      for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0 ? x[i] : 0.0;
      break;
  }
  return y;
}

// Derivative expressed through the forward output y.
inline Tensor activation_backward(const Tensor& grad_out, const Tensor& y, Act kind) {
  require_same_shape(grad_out, y, "activation_backward");
  Tensor g(y.shape());
  switch (kind) {
    case Act::sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * y[i] * (1.0 - y[i]);
      break;
    case Act::tanh:
      for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * (1.0 - y[i] * y[i]);
      break;
    case Act::relu:
      for (std::size_t i = 0; i < y.size(); ++i) g[i] = y[i] > 0 ? grad_out[i] : 0.0;
      break;
  }
  return g;
}

struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

inline Linear make_linear(std::size_t out, std::size_t in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return {Tensor::uniform({out, in}, rng, -bound, bound), Tensor::zeros({out})};
}

inline Tensor linear_forward(const Tensor& x, const Linear& layer) {
  if (x.ndim() != 2 || x.shape()[1] != layer.weight.shape()[1])
    throw shape_error("linear: input " + x.shape_str() + " incompatible with weight " +
                      layer.weight.shape_str());
  const std::size_t n = x.shape()[0], fin = x.shape()[1], fout = layer.weight.shape()[0];
  Tensor y({n, fout});
  for (std::size_t b = 0; b < n; ++b) {
    const double* xr = x.data() + b * fin;
    for (std::size_t o = 0; o < fout; ++o) {
      const double* w = layer.weight.data() + o * fin;
      double acc = layer.bias[o];
      for (std::size_t f = 0; f < fin; ++f) acc += w[f] * xr[f];
      y.data()[b * fout + o] = acc;
    }
  }
  return y;
}

inline void linear_backward(const Tensor& grad_out, const Tensor& x, const Linear& layer,
                            Tensor* grad_input, Tensor& grad_weight, Tensor& grad_bias) {
  const std::size_t n = x.shape()[0], fin = x.shape()[1], fout = layer.weight.shape()[0];
  require_shape(grad_out, {n, fout}, "linear_backward grad_out");
  if (grad_input) grad_input->fill(0.0);
  for (std::size_t b = 0; b < n; ++b) {
    const double* xr = x.data() + b * fin;
    const double* gr = grad_out.data() + b * fout;
    double* gi = grad_input ? grad_input->data() + b * fin : nullptr;
    for (std::size_t o = 0; o < fout; ++o) {
      const double g = gr[o];
      grad_bias[o] += g;
      const double* w = layer.weight.data() + o * fin;
      double* gw = grad_weight.data() + o * fin;
      for (std::size_t f = 0; f < fin; ++f) {
        gw[f] += g * xr[f];
        if (gi) gi[f] += g * w[f];
      }
    }
  }
}

// [n, ch, d, h, w] -> [n, ch]
inline Tensor global_avg_pool(const Tensor& x) {
  if (x.ndim() != 5) throw shape_error("global_avg_pool: need 5-d input, got " + x.shape_str());
  const std::size_t n = x.shape()[0], ch = x.shape()[1];
  const std::size_t spatial = x.shape()[2] * x.shape()[3] * x.shape()[4];
  Tensor y({n, ch});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const double* p = x.data() + (b * ch + c) * spatial;
      double acc = 0.0;
      for (std::size_t v = 0; v < spatial; ++v) acc += p[v];
      y.data()[b * ch + c] = acc / static_cast<double>(spatial);
    }
  return y;
}

inline Tensor global_avg_pool_backward(const Tensor& grad_out,
                                       const std::vector<std::size_t>& in_shape) {
  const std::size_t n = in_shape[0], ch = in_shape[1];
  const std::size_t spatial = in_shape[2] * in_shape[3] * in_shape[4];
  require_shape(grad_out, {n, ch}, "global_avg_pool_backward");
  Tensor g(in_shape);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const double v = grad_out.data()[b * ch + c] / static_cast<double>(spatial);
      double* p = g.data() + (b * ch + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) p[s] = v;
    }
  return g;
}

}  // namespace cepn
