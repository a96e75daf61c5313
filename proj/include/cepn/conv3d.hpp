#pragma once

#include <cstddef>
#include <vector>

#include "cepn/rng.hpp"
#include "cepn/tensor.hpp"

namespace cepn {

// 3D convolution layer: weight [out_ch, in_ch, kd, kh, kw], bias [out_ch].
struct Conv3d {
  Tensor weight;
  Tensor bias;
  int stride = 1;
  int padding = 0;
};

// Uniform fan-in init, zero bias.
inline Conv3d make_conv3d(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                          int stride, int padding, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * k * k * k));
  Conv3d c;
  c.weight = Tensor::uniform({out_ch, in_ch, k, k, k}, rng, -bound, bound);
  c.bias = Tensor::zeros({out_ch});
  c.stride = stride;
  c.padding = padding;
  return c;
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, int stride,
                                   int padding, const char* who) {
  long v = (static_cast<long>(in) + 2L * padding - static_cast<long>(k));
  if (v < 0 || stride < 1)
    throw shape_error(std::string(who) + ": kernel " + std::to_string(k) +
                      " does not fit input extent " + std::to_string(in) +
                      " with padding " + std::to_string(padding));
  return static_cast<std::size_t>(v / stride) + 1;
}

inline std::vector<std::size_t> conv3d_out_shape(const std::vector<std::size_t>& in,
                                                 const Tensor& weight, int stride,
                                                 int padding) {
  if (in.size() != 5 || weight.ndim() != 5)
    throw shape_error("conv3d: need 5-d input [n,c,d,h,w] and 5-d weight, got input " +
                      Tensor::shape_str(in) + ", weight " + weight.shape_str());
  if (in[1] != weight.shape()[1])
    throw shape_error("conv3d: input has " + std::to_string(in[1]) +
                      " channels, weight expects " + std::to_string(weight.shape()[1]));
  return {in[0], weight.shape()[0],
          conv_out_extent(in[2], weight.shape()[2], stride, padding, "conv3d depth"),
          conv_out_extent(in[3], weight.shape()[3], stride, padding, "conv3d height"),
          conv_out_extent(in[4], weight.shape()[4], stride, padding, "conv3d width")};
}

namespace detail {

// Row-level kernels. A convolution decomposes into per-kernel-tap shifted
// row operations; keeping the inner loop over the output width makes it
// contiguous and auto-vectorizable for stride 1.
inline void conv_row_fwd(double* out, const double* in, double w, std::size_t ow_lo,
                         std::size_t ow_hi, int stride, long in_base) {
  if (stride == 1) {
    const double* src = in + (in_base + static_cast<long>(ow_lo));
    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) out[ow] += w * src[ow - ow_lo];
  } else {
    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow)
      out[ow] += w * in[in_base + static_cast<long>(ow) * stride];
  }
}

inline double conv_row_dot(const double* gout, const double* in, std::size_t ow_lo,
                           std::size_t ow_hi, int stride, long in_base) {
  double acc = 0.0;
  if (stride == 1) {
    const double* src = in + (in_base + static_cast<long>(ow_lo));
    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) acc += gout[ow] * src[ow - ow_lo];
  } else {
    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow)
      acc += gout[ow] * in[in_base + static_cast<long>(ow) * stride];
  }
  return acc;
}

inline void conv_row_scatter(const double* gout, double* gin, double w, std::size_t ow_lo,
                             std::size_t ow_hi, int stride, long in_base) {
  if (stride == 1) {
    double* dst = gin + (in_base + static_cast<long>(ow_lo));
    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow) dst[ow - ow_lo] += w * gout[ow];
  } else {
    for (std::size_t ow = ow_lo; ow < ow_hi; ++ow)
      gin[in_base + static_cast<long>(ow) * stride] += w * gout[ow];
  }
}

// Valid output range along one axis for kernel offset koff: positions ow with
// 0 <= ow*stride + koff - padding < in_extent.
inline void conv_axis_range(std::size_t out_ext, std::size_t in_ext, long koff,
                            int stride, int padding, std::size_t& lo, std::size_t& hi) {
  const long shift = koff - padding;
  long lo_l = 0;
  if (shift < 0) lo_l = (-shift + stride - 1) / stride;
  long hi_l = 0;
  const long max_pos = static_cast<long>(in_ext) - 1 - shift;
  if (max_pos >= 0) hi_l = std::min(static_cast<long>(out_ext), max_pos / stride + 1);
  lo_l = std::min(lo_l, static_cast<long>(out_ext));
  if (hi_l < lo_l) hi_l = lo_l;
  lo = static_cast<std::size_t>(lo_l);
  hi = static_cast<std::size_t>(hi_l);
}

}  // namespace detail

// Zero-padded direct convolution. bias may be null.
inline Tensor conv3d_forward(const Tensor& input, const Tensor& weight,
                             const Tensor* bias, int stride, int padding) {
  auto out_shape = conv3d_out_shape(input.shape(), weight, stride, padding);
  if (bias && bias->shape() != std::vector<std::size_t>{weight.shape()[0]})
    throw shape_error("conv3d: bias shape " + bias->shape_str() + " != [out_ch]");
  Tensor out(out_shape);

  const std::size_t n = input.shape()[0], ic = input.shape()[1], id = input.shape()[2],
                    ih = input.shape()[3], iw = input.shape()[4];
  const std::size_t oc = out_shape[1], od = out_shape[2], oh = out_shape[3],
                    ow = out_shape[4];
  const std::size_t kd = weight.shape()[2], kh = weight.shape()[3], kw = weight.shape()[4];

  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < oc; ++o) {
      double* out_ch = out.data() + ((b * oc + o) * od * oh * ow);
      const double bv = bias ? (*bias)[o] : 0.0;
      for (std::size_t v = 0; v < od * oh * ow; ++v) out_ch[v] = bv;
      for (std::size_t i = 0; i < ic; ++i) {
        const double* in_ch = input.data() + ((b * ic + i) * id * ih * iw);
        const double* w_k = weight.data() + ((o * ic + i) * kd * kh * kw);
        for (std::size_t zk = 0; zk < kd; ++zk) {
          std::size_t od_lo, od_hi;
          detail::conv_axis_range(od, id, static_cast<long>(zk), stride, padding, od_lo, od_hi);
          for (std::size_t yk = 0; yk < kh; ++yk) {
            std::size_t oh_lo, oh_hi;
            detail::conv_axis_range(oh, ih, static_cast<long>(yk), stride, padding, oh_lo, oh_hi);
            for (std::size_t xk = 0; xk < kw; ++xk) {
              const double wv = w_k[(zk * kh + yk) * kw + xk];
              std::size_t ow_lo, ow_hi;
              detail::conv_axis_range(ow, iw, static_cast<long>(xk), stride, padding, ow_lo, ow_hi);
              if (ow_lo >= ow_hi) continue;
              const long xoff = static_cast<long>(xk) - padding;
              for (std::size_t z = od_lo; z < od_hi; ++z) {
                const std::size_t zi = z * stride + zk - padding;
                for (std::size_t y = oh_lo; y < oh_hi; ++y) {
                  const std::size_t yi = y * stride + yk - padding;
                  detail::conv_row_fwd(out_ch + (z * oh + y) * ow,
                                       in_ch + (zi * ih + yi) * iw, wv, ow_lo, ow_hi,
                                       stride, xoff);
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

inline Tensor conv3d_forward(const Tensor& input, const Conv3d& layer) {
  return conv3d_forward(input, layer.weight, &layer.bias, layer.stride, layer.padding);
}

// Accumulates gradients into the provided buffers. grad_input may be null when
// the input gradient is not needed (first layer). grad_bias may be null for
// bias-free convolutions.
inline void conv3d_backward(const Tensor& grad_out, const Tensor& input,
                            const Tensor& weight, int stride, int padding,
                            Tensor* grad_input, Tensor& grad_weight, Tensor* grad_bias) {
  auto out_shape = conv3d_out_shape(input.shape(), weight, stride, padding);
  require_shape(grad_out, out_shape, "conv3d_backward grad_out");
  require_same_shape(grad_weight, weight, "conv3d_backward grad_weight");
  if (grad_input) require_same_shape(*grad_input, input, "conv3d_backward grad_input");

  const std::size_t n = input.shape()[0], ic = input.shape()[1], id = input.shape()[2],
                    ih = input.shape()[3], iw = input.shape()[4];
  const std::size_t oc = out_shape[1], od = out_shape[2], oh = out_shape[3],
                    ow = out_shape[4];
  const std::size_t kd = weight.shape()[2], kh = weight.shape()[3], kw = weight.shape()[4];

  if (grad_bias) {
    require_shape(*grad_bias, {oc}, "conv3d_backward grad_bias");
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < oc; ++o) {
        const double* g = grad_out.data() + ((b * oc + o) * od * oh * ow);
        double acc = 0.0;
        for (std::size_t v = 0; v < od * oh * ow; ++v) acc += g[v];
        (*grad_bias)[o] += acc;
      }
  }

  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < oc; ++o) {
      const double* g_ch = grad_out.data() + ((b * oc + o) * od * oh * ow);
      for (std::size_t i = 0; i < ic; ++i) {
        const double* in_ch = input.data() + ((b * ic + i) * id * ih * iw);
        double* gin_ch =
            grad_input ? grad_input->data() + ((b * ic + i) * id * ih * iw) : nullptr;
        const double* w_k = weight.data() + ((o * ic + i) * kd * kh * kw);
        double* gw_k = grad_weight.data() + ((o * ic + i) * kd * kh * kw);
        for (std::size_t zk = 0; zk < kd; ++zk) {
          std::size_t od_lo, od_hi;
          detail::conv_axis_range(od, id, static_cast<long>(zk), stride, padding, od_lo, od_hi);
          for (std::size_t yk = 0; yk < kh; ++yk) {
            std::size_t oh_lo, oh_hi;
            detail::conv_axis_range(oh, ih, static_cast<long>(yk), stride, padding, oh_lo, oh_hi);
            for (std::size_t xk = 0; xk < kw; ++xk) {
              std::size_t ow_lo, ow_hi;
              detail::conv_axis_range(ow, iw, static_cast<long>(xk), stride, padding, ow_lo, ow_hi);
              if (ow_lo >= ow_hi || od_lo >= od_hi || oh_lo >= oh_hi) continue;
              const long xoff = static_cast<long>(xk) - padding;
              const double wv = w_k[(zk * kh + yk) * kw + xk];
              double wacc = 0.0;
              for (std::size_t z = od_lo; z < od_hi; ++z) {
                const std::size_t zi = z * stride + zk - padding;
                for (std::size_t y = oh_lo; y < oh_hi; ++y) {
                  const std::size_t yi = y * stride + yk - padding;
                  const double* grow = g_ch + (z * oh + y) * ow;
                  const double* irow = in_ch + (zi * ih + yi) * iw;
                  wacc += detail::conv_row_dot(grow, irow, ow_lo, ow_hi, stride, xoff);
                  if (gin_ch)
                    detail::conv_row_scatter(grow, gin_ch + (zi * ih + yi) * iw, wv, ow_lo,
                                             ow_hi, stride, xoff);
                }
              }
              gw_k[(zk * kh + yk) * kw + xk] += wacc;
            }
          }
        }
      }
    }
  }
}

struct Conv3dGrads {
  Tensor input, weight, bias;
};

inline Conv3dGrads conv3d_backward(const Tensor& grad_out, const Tensor& input,
                                   const Conv3d& layer) {
  Conv3dGrads g;
  g.input = Tensor::zeros(input.shape());
  g.weight = Tensor::zeros(layer.weight.shape());
  g.bias = Tensor::zeros(layer.bias.shape());
  conv3d_backward(grad_out, input, layer.weight, layer.stride, layer.padding, &g.input,
                  g.weight, &g.bias);
  return g;
}

}  // namespace cepn
