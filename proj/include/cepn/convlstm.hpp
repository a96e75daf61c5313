#pragma once

#include <array>
#include <vector>

#include "cepn/conv3d.hpp"
#include "cepn/nn.hpp"
#include "cepn/tensor.hpp"

namespace cepn {

// Convolutional LSTM cell. All gates use the same kernel size and padding so
// the hidden state keeps the spatial extent of the input. Gate order is
// f, i, o, g (g = candidate cell content).
struct ConvLstmCell {
  std::array<Tensor, 4> wx;    // [hidden, in_ch, k, k, k]
  std::array<Tensor, 4> wh;    // [hidden, hidden, k, k, k]
  std::array<Tensor, 4> bias;  // [hidden]
  int padding = 1;
};

inline ConvLstmCell make_convlstm_cell(std::size_t in_ch, std::size_t hidden,
                                       std::size_t k, Rng& rng) {
  ConvLstmCell cell;
  cell.padding = static_cast<int>(k / 2);
  const double bx = 1.0 / std::sqrt(static_cast<double>(in_ch * k * k * k));
  const double bh = 1.0 / std::sqrt(static_cast<double>(hidden * k * k * k));
  for (int gate = 0; gate < 4; ++gate) {
    cell.wx[gate] = Tensor::uniform({hidden, in_ch, k, k, k}, rng, -bx, bx);
    cell.wh[gate] = Tensor::uniform({hidden, hidden, k, k, k}, rng, -bh, bh);
    cell.bias[gate] = Tensor::zeros({hidden});
  }
  // Forget gate starts open so early gradients reach earlier phases.
  cell.bias[0].fill(1.0);
  return cell;
}

struct ConvLstmState {
  Tensor h, c;
};

inline ConvLstmState make_convlstm_state(const ConvLstmCell& cell,
                                         const std::vector<std::size_t>& x_shape) {
  std::vector<std::size_t> s{x_shape[0], cell.wh[0].shape()[0], x_shape[2], x_shape[3],
                             x_shape[4]};
  return {Tensor::zeros(s), Tensor::zeros(s)};
}

struct ConvLstmStepCache {
  Tensor x, h_prev, c_prev;
  std::array<Tensor, 4> gate;  // post-activation f, i, o, g
  Tensor tanh_c;
  bool filled = false;
};

inline ConvLstmState convlstm_step(const Tensor& x, const ConvLstmState& prev,
                                   const ConvLstmCell& cell,
                                   ConvLstmStepCache* cache = nullptr) {
  require_same_shape(prev.h, prev.c, "convlstm_step state");
  std::array<Tensor, 4> gate;
  for (int g = 0; g < 4; ++g) {
    gate[g] = conv3d_forward(x, cell.wx[g], &cell.bias[g], 1, cell.padding);
    Tensor zh = conv3d_forward(prev.h, cell.wh[g], nullptr, 1, cell.padding);
    for (std::size_t v = 0; v < gate[g].size(); ++v) gate[g][v] += zh[v];
  }
  for (std::size_t v = 0; v < gate[0].size(); ++v) {
    gate[0][v] = sigmoid(gate[0][v]);
    gate[1][v] = sigmoid(gate[1][v]);
    gate[2][v] = sigmoid(gate[2][v]);
    gate[3][v] = std::tanh(gate[3][v]);
  }
  ConvLstmState next{Tensor(prev.h.shape()), Tensor(prev.c.shape())};
  Tensor tanh_c(prev.c.shape());
  for (std::size_t v = 0; v < next.c.size(); ++v) {
    next.c[v] = gate[0][v] * prev.c[v] + gate[1][v] * gate[3][v];
    tanh_c[v] = std::tanh(next.c[v]);
    next.h[v] = gate[2][v] * tanh_c[v];
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->gate = gate;
    cache->tanh_c = std::move(tanh_c);
    cache->filled = true;
  }
  return next;
}

struct ConvLstmGrads {
  std::array<Tensor, 4> wx, wh, bias;
};

inline ConvLstmGrads make_convlstm_grads(const ConvLstmCell& cell) {
  ConvLstmGrads g;
  for (int gate = 0; gate < 4; ++gate) {
    g.wx[gate] = Tensor::zeros(cell.wx[gate].shape());
    g.wh[gate] = Tensor::zeros(cell.wh[gate].shape());
    g.bias[gate] = Tensor::zeros(cell.bias[gate].shape());
  }
  return g;
}

// grad_h / grad_c: gradients flowing into H_t and C_t. Parameter gradients
// accumulate into `grads`; grad_x, grad_h_prev, grad_c_prev are overwritten.
inline void convlstm_step_backward(const Tensor& grad_h, const Tensor& grad_c,
                                   const ConvLstmStepCache& cache,
                                   const ConvLstmCell& cell, ConvLstmGrads& grads,
                                   Tensor* grad_x, Tensor& grad_h_prev,
                                   Tensor& grad_c_prev) {
  if (!cache.filled)
    throw numeric_error("convlstm_step_backward: cache not filled by a forward pass");
  require_same_shape(grad_h, cache.tanh_c, "convlstm_step_backward grad_h");
  require_same_shape(grad_c, cache.tanh_c, "convlstm_step_backward grad_c");

  const Tensor& f = cache.gate[0];
  const Tensor& i = cache.gate[1];
  const Tensor& o = cache.gate[2];
  const Tensor& g = cache.gate[3];
  const std::size_t m = grad_h.size();

  // Pre-activation gate gradients.
  std::array<Tensor, 4> dz;
  for (int k = 0; k < 4; ++k) dz[k] = Tensor(f.shape());
  grad_c_prev = Tensor(cache.c_prev.shape());
  for (std::size_t v = 0; v < m; ++v) {
    const double dc = grad_c[v] + grad_h[v] * o[v] * (1.0 - cache.tanh_c[v] * cache.tanh_c[v]);
    dz[0][v] = dc * cache.c_prev[v] * f[v] * (1.0 - f[v]);
    dz[1][v] = dc * g[v] * i[v] * (1.0 - i[v]);
    dz[2][v] = grad_h[v] * cache.tanh_c[v] * o[v] * (1.0 - o[v]);
    dz[3][v] = dc * i[v] * (1.0 - g[v] * g[v]);
    grad_c_prev[v] = dc * f[v];
  }

  if (grad_x) grad_x->fill(0.0);
  grad_h_prev = Tensor::zeros(cache.h_prev.shape());
  for (int k = 0; k < 4; ++k) {
    conv3d_backward(dz[k], cache.x, cell.wx[k], 1, cell.padding, grad_x, grads.wx[k],
                    &grads.bias[k]);
    conv3d_backward(dz[k], cache.h_prev, cell.wh[k], 1, cell.padding, &grad_h_prev,
                    grads.wh[k], nullptr);
  }
}

// Unrolls the cell over a phase sequence from a zero initial state and returns
// the state after every step.
inline std::vector<ConvLstmState> convlstm_unroll(const std::vector<Tensor>& xs,
                                                  const ConvLstmCell& cell,
                                                  std::vector<ConvLstmStepCache>* cache) {
  if (xs.empty()) throw shape_error("convlstm_unroll: empty input sequence");
  if (cache) cache->assign(xs.size(), {});
  std::vector<ConvLstmState> states;
  states.reserve(xs.size());
  ConvLstmState state = make_convlstm_state(cell, xs[0].shape());
  for (std::size_t t = 0; t < xs.size(); ++t) {
    state = convlstm_step(xs[t], state, cell, cache ? &(*cache)[t] : nullptr);
    states.push_back(state);
  }
  return states;
}

// grad_h_steps[t]: gradient injected into H_t from outside the recurrence
// (size 0 tensor when a step's hidden state is unused). Returns grad w.r.t.
// each input x_t.
inline std::vector<Tensor> convlstm_unroll_backward(
    const std::vector<Tensor>& grad_h_steps, const std::vector<ConvLstmStepCache>& cache,
    const ConvLstmCell& cell, ConvLstmGrads& grads) {
  if (cache.size() != grad_h_steps.size() || cache.empty())
    throw shape_error("convlstm_unroll_backward: cache/gradient length mismatch");
  const std::size_t steps = cache.size();
  std::vector<Tensor> grad_xs(steps);
  Tensor gh = Tensor::zeros(cache.back().tanh_c.shape());
  Tensor gc = Tensor::zeros(cache.back().tanh_c.shape());
  for (std::size_t t = steps; t-- > 0;) {
    if (grad_h_steps[t].size() > 0) {
      require_same_shape(grad_h_steps[t], gh, "convlstm_unroll_backward grad_h");
      for (std::size_t v = 0; v < gh.size(); ++v) gh[v] += grad_h_steps[t][v];
    }
    grad_xs[t] = Tensor::zeros(cache[t].x.shape());
    Tensor gh_prev, gc_prev;
    convlstm_step_backward(gh, gc, cache[t], cell, grads, &grad_xs[t], gh_prev, gc_prev);
    gh = std::move(gh_prev);
    gc = std::move(gc_prev);
  }
  return grad_xs;
}

}  // namespace cepn
