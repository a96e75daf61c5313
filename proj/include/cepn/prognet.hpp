#pragma once

#include <array>
#include <string>
#include <vector>

#include "cepn/batchnorm.hpp"
#include "cepn/conv3d.hpp"
#include "cepn/convlstm.hpp"
#include "cepn/data.hpp"
#include "cepn/error.hpp"
#include "cepn/losses.hpp"
#include "cepn/nn.hpp"
#include "cepn/tensor.hpp"

namespace cepn {

enum class Variant {
  multi_task_ce_convlstm,
  ce_convlstm_only,
  early_fusion_cnn,
  early_fusion_resnet,
  resnet_ce_convlstm,
  margin_only_cnn,
};

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::multi_task_ce_convlstm: return "multi_task_ce_convlstm";
    case Variant::ce_convlstm_only: return "ce_convlstm_only";
    case Variant::early_fusion_cnn: return "early_fusion_cnn";
    case Variant::early_fusion_resnet: return "early_fusion_resnet";
    case Variant::resnet_ce_convlstm: return "resnet_ce_convlstm";
    case Variant::margin_only_cnn: return "margin_only_cnn";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::multi_task_ce_convlstm, Variant::ce_convlstm_only,
                    Variant::early_fusion_cnn, Variant::early_fusion_resnet,
                    Variant::resnet_ce_convlstm, Variant::margin_only_cnn})
    if (s == variant_name(v)) return v;
  throw config_error("unknown variant '" + s + "'");
}

inline bool has_margin_branch(Variant v) {
  return v == Variant::multi_task_ce_convlstm || v == Variant::margin_only_cnn;
}
inline bool has_risk_head(Variant v) { return v != Variant::margin_only_cnn; }
inline bool has_margin_head(Variant v) { return has_margin_branch(v); }
inline bool uses_convlstm(Variant v) {
  return v == Variant::multi_task_ce_convlstm || v == Variant::ce_convlstm_only ||
         v == Variant::resnet_ce_convlstm;
}
inline bool uses_res_encoder(Variant v) {
  return v == Variant::multi_task_ce_convlstm || v == Variant::resnet_ce_convlstm ||
         v == Variant::early_fusion_resnet;
}
inline bool uses_plain_encoder(Variant v) {
  return v == Variant::ce_convlstm_only || v == Variant::early_fusion_cnn;
}
// Early-fusion variants feed the 5-channel phase+mask stack to the encoder.
inline bool early_fusion_input(Variant v) {
  return v == Variant::early_fusion_cnn || v == Variant::early_fusion_resnet;
}

struct ModelConfig {
  Variant variant = Variant::multi_task_ce_convlstm;
  std::size_t encoder_width = 8;
  std::size_t hidden_ch = 8;
  std::size_t input_extent = 16;
  std::size_t phases = 3;
  std::size_t channels_per_phase = 3;
  std::size_t fusion_ch = 0;  // 0 = derive from variant/width/hidden
  double loss_weight_margin = 1.0;
  bool pool_states = false;  // average pooled H_t over steps instead of last H
};

inline std::size_t margin_feature_ch(const ModelConfig& c) { return 4 * c.encoder_width; }
inline std::size_t survival_feature_ch(const ModelConfig& c) {
  return uses_convlstm(c.variant) ? c.hidden_ch : c.encoder_width;
}
inline std::size_t fusion_channels(const ModelConfig& c) {
  std::size_t f = 0;
  if (has_margin_branch(c.variant)) f += margin_feature_ch(c);
  if (has_risk_head(c.variant)) f += survival_feature_ch(c);
  // margin_only has no survival part; survival-only has no margin part.
  if (c.variant == Variant::margin_only_cnn) f = margin_feature_ch(c);
  if (!has_margin_branch(c.variant)) f = survival_feature_ch(c);
  return f;
}

inline void validate_config(const ModelConfig& c) {
  if (c.encoder_width < 1) throw config_error("encoder_width must be positive");
  if (c.hidden_ch < 1) throw config_error("hidden_ch must be positive");
  if (c.input_extent < 8) throw config_error("input_extent must be >= 8");
  if (c.phases < 1) throw config_error("phases must be >= 1");
  if (c.channels_per_phase != 3)
    throw config_error("channels_per_phase must be 3 (CT + tumor mask + pancreas mask)");
  if (c.loss_weight_margin < 0.0) throw config_error("loss_weight_margin must be >= 0");
  if (c.fusion_ch != 0 && c.fusion_ch != fusion_channels(c))
    throw config_error("fusion_ch " + std::to_string(c.fusion_ch) +
                       " inconsistent with variant layout (derived " +
                       std::to_string(fusion_channels(c)) + ")");
}

// --- Layer groups -------------------------------------------------------

struct ConvBn {
  Conv3d conv;
  BatchNorm bn;
};

inline ConvBn make_conv_bn(std::size_t oc, std::size_t ic, std::size_t k, int stride,
                           int padding, Rng& rng) {
  return {make_conv3d(oc, ic, k, stride, padding, rng), make_batchnorm(oc)};
}

struct ConvBnCache {
  Tensor x;
  BnCache bn;
  Tensor y;  // post-ReLU
};

inline Tensor conv_bn_relu(const Tensor& x, ConvBn& layer, BnMode mode,
                           ConvBnCache* cache) {
  Tensor c = conv3d_forward(x, layer.conv);
  Tensor b = batchnorm_forward(c, layer.bn, mode, cache ? &cache->bn : nullptr);
  Tensor y = activation(b, Act::relu);
  if (cache) {
    cache->x = x;
    cache->y = y;
  }
  return y;
}

// Accumulates into grads; grad_x (if given) is accumulated into as well.
inline void conv_bn_relu_backward(const Tensor& grad_y, const ConvBnCache& cache,
                                  const ConvBn& layer, ConvBn& grads, Tensor* grad_x) {
  Tensor g = activation_backward(grad_y, cache.y, Act::relu);
  Tensor gc(g.shape());
  batchnorm_backward(g, cache.bn, layer.bn, gc, grads.bn.gamma, grads.bn.beta);
  conv3d_backward(gc, cache.x, layer.conv.weight, layer.conv.stride, layer.conv.padding,
                  grad_x, grads.conv.weight, &grads.conv.bias);
}

struct ResBlock {
  ConvBn c1, c2;        // c1 carries the block stride; c2 is stride 1
  bool has_proj = false;
  ConvBn proj;          // 1x1x1 stride-matched projection when downsampling
};

inline ResBlock make_res_block(std::size_t ch, int stride, Rng& rng) {
  ResBlock b;
  b.c1 = make_conv_bn(ch, ch, 3, stride, 1, rng);
  b.c2 = make_conv_bn(ch, ch, 3, 1, 1, rng);
  b.has_proj = stride != 1;
  if (b.has_proj) b.proj = make_conv_bn(ch, ch, 1, stride, 0, rng);
  return b;
}

struct ResBlockCache {
  ConvBnCache c1;
  BnCache bn2, bnp;
  Tensor out;  // post-add ReLU output
};

inline Tensor res_block_forward(const Tensor& x, ResBlock& block, BnMode mode,
                                ResBlockCache* cache) {
  Tensor a = conv_bn_relu(x, block.c1, mode, cache ? &cache->c1 : nullptr);
  Tensor b = conv3d_forward(a, block.c2.conv);
  b = batchnorm_forward(b, block.c2.bn, mode, cache ? &cache->bn2 : nullptr);
  Tensor skip = block.has_proj
                    ? batchnorm_forward(conv3d_forward(x, block.proj.conv), block.proj.bn,
                                        mode, cache ? &cache->bnp : nullptr)
                    : x;
  require_same_shape(b, skip, "res_block skip");
  for (std::size_t i = 0; i < b.size(); ++i) b[i] += skip[i];
  Tensor y = activation(b, Act::relu);
  if (cache) cache->out = y;
  return y;
}

inline void res_block_backward(const Tensor& grad_y, const ResBlockCache& cache,
                               const ResBlock& block, ResBlock& grads, Tensor* grad_x) {
  Tensor g = activation_backward(grad_y, cache.out, Act::relu);
  // Main path: bn2 <- conv2 <- (relu-bn-conv1).
  Tensor g2(g.shape());
  batchnorm_backward(g, cache.bn2, block.c2.bn, g2, grads.c2.bn.gamma, grads.c2.bn.beta);
  Tensor ga = Tensor::zeros(cache.c1.y.shape());
  conv3d_backward(g2, cache.c1.y, block.c2.conv.weight, 1, 1, &ga, grads.c2.conv.weight,
                  &grads.c2.conv.bias);
  conv_bn_relu_backward(ga, cache.c1, block.c1, grads.c1, grad_x);
  // Skip path.
  if (block.has_proj) {
    Tensor gp(g.shape());
    batchnorm_backward(g, cache.bnp, block.proj.bn, gp, grads.proj.bn.gamma,
                       grads.proj.bn.beta);
    conv3d_backward(gp, cache.c1.x, block.proj.conv.weight, block.proj.conv.stride, 0,
                    grad_x, grads.proj.conv.weight, &grads.proj.conv.bias);
  } else if (grad_x) {
    for (std::size_t i = 0; i < g.size(); ++i) (*grad_x)[i] += g[i];
  }
}

// Reduced residual encoder: stride-2 stem then 3 residual stages (strides
// 1, 2, 1), constant width. 16^3 input -> [w, 4, 4, 4].
struct ResEncoder {
  ConvBn stem;
  std::array<ResBlock, 3> blocks;
};

inline ResEncoder make_res_encoder(std::size_t in_ch, std::size_t width, Rng& rng) {
  ResEncoder e;
  e.stem = make_conv_bn(width, in_ch, 3, 2, 1, rng);
  const int strides[3] = {1, 2, 1};
  for (int i = 0; i < 3; ++i) e.blocks[i] = make_res_block(width, strides[i], rng);
  return e;
}

struct ResEncoderCache {
  ConvBnCache stem;
  std::array<ResBlockCache, 3> blocks;
};

inline Tensor res_encoder_forward(const Tensor& x, ResEncoder& enc, BnMode mode,
                                  ResEncoderCache* cache) {
  Tensor h = conv_bn_relu(x, enc.stem, mode, cache ? &cache->stem : nullptr);
  for (int i = 0; i < 3; ++i)
    h = res_block_forward(h, enc.blocks[i], mode, cache ? &cache->blocks[i] : nullptr);
  return h;
}

inline void res_encoder_backward(const Tensor& grad_y, const ResEncoderCache& cache,
                                 const ResEncoder& enc, ResEncoder& grads) {
  Tensor g = grad_y;
  for (int i = 2; i >= 0; --i) {
    Tensor gx = Tensor::zeros(cache.blocks[i].c1.x.shape());
    res_block_backward(g, cache.blocks[i], enc.blocks[i], grads.blocks[i], &gx);
    g = std::move(gx);
  }
  conv_bn_relu_backward(g, cache.stem, enc.stem, grads.stem, nullptr);
}

// Plain 4-layer encoder (the 3DCNN backbone), strides 2,1,2,1.
struct PlainEncoder {
  std::array<ConvBn, 4> layers;
};

inline PlainEncoder make_plain_encoder(std::size_t in_ch, std::size_t width, Rng& rng) {
  PlainEncoder e;
  const int strides[4] = {2, 1, 2, 1};
  std::size_t ic = in_ch;
  for (int i = 0; i < 4; ++i) {
    e.layers[i] = make_conv_bn(width, ic, 3, strides[i], 1, rng);
    ic = width;
  }
  return e;
}

struct PlainEncoderCache {
  std::array<ConvBnCache, 4> layers;
};

inline Tensor plain_encoder_forward(const Tensor& x, PlainEncoder& enc, BnMode mode,
                                    PlainEncoderCache* cache) {
  Tensor h = x;
  for (int i = 0; i < 4; ++i)
    h = conv_bn_relu(h, enc.layers[i], mode, cache ? &cache->layers[i] : nullptr);
  return h;
}

inline void plain_encoder_backward(const Tensor& grad_y, const PlainEncoderCache& cache,
                                   const PlainEncoder& enc, PlainEncoder& grads) {
  Tensor g = grad_y;
  for (int i = 3; i >= 0; --i) {
    if (i == 0) {
      conv_bn_relu_backward(g, cache.layers[0], enc.layers[0], grads.layers[0], nullptr);
    } else {
      Tensor gx = Tensor::zeros(cache.layers[i].x.shape());
      conv_bn_relu_backward(g, cache.layers[i], enc.layers[i], grads.layers[i], &gx);
      g = std::move(gx);
    }
  }
}

// Six-layer margin branch: widths w,w,2w,2w,4w,4w; stride 2 at layers 1,3,5.
struct MarginBranch {
  std::array<ConvBn, 6> layers;
};

inline MarginBranch make_margin_branch(std::size_t in_ch, std::size_t width, Rng& rng) {
  MarginBranch m;
  const std::size_t widths[6] = {width, width, 2 * width, 2 * width, 4 * width, 4 * width};
  const int strides[6] = {2, 1, 2, 1, 2, 1};
  std::size_t ic = in_ch;
  for (int i = 0; i < 6; ++i) {
    m.layers[i] = make_conv_bn(widths[i], ic, 3, strides[i], 1, rng);
    ic = widths[i];
  }
  return m;
}

struct MarginBranchCache {
  std::array<ConvBnCache, 6> layers;
};

inline Tensor margin_branch_forward(const Tensor& x, MarginBranch& branch,
                                    std::size_t expected_ch, BnMode mode,
                                    MarginBranchCache* cache) {
  if (x.ndim() != 5 || x.shape()[1] != expected_ch)
    throw shape_error("margin branch: expected " + std::to_string(expected_ch) +
                      " input channels (phases + 2 masks), got " +
                      (x.ndim() == 5 ? std::to_string(x.shape()[1]) : x.shape_str()));
  Tensor h = x;
  for (int i = 0; i < 6; ++i)
    h = conv_bn_relu(h, branch.layers[i], mode, cache ? &cache->layers[i] : nullptr);
  return h;
}

inline void margin_branch_backward(const Tensor& grad_y, const MarginBranchCache& cache,
                                   const MarginBranch& branch, MarginBranch& grads) {
  Tensor g = grad_y;
  for (int i = 5; i >= 0; --i) {
    if (i == 0) {
      conv_bn_relu_backward(g, cache.layers[0], branch.layers[0], grads.layers[0], nullptr);
    } else {
      Tensor gx = Tensor::zeros(cache.layers[i].x.shape());
      conv_bn_relu_backward(g, cache.layers[i], branch.layers[i], grads.layers[i], &gx);
      g = std::move(gx);
    }
  }
}

// Prediction head: 64-unit hidden layer, ReLU, scalar output.
struct Head {
  Linear fc1, fc2;
};

inline Head make_head(std::size_t in, Rng& rng) {
  return {make_linear(64, in, rng), make_linear(1, 64, rng)};
}

struct HeadCache {
  Tensor x, h;
};

inline Tensor head_forward(const Tensor& x, Head& head, HeadCache* cache) {
  Tensor h = activation(linear_forward(x, head.fc1), Act::relu);
  Tensor y = linear_forward(h, head.fc2);
  if (cache) {
    cache->x = x;
    cache->h = h;
  }
  return y;
}

inline void head_backward(const Tensor& grad_y, const HeadCache& cache, const Head& head,
                          Head& grads, Tensor& grad_x) {
  Tensor gh(cache.h.shape());
  linear_backward(grad_y, cache.h, head.fc2, &gh, grads.fc2.weight, grads.fc2.bias);
  Tensor ghm = activation_backward(gh, cache.h, Act::relu);
  linear_backward(ghm, cache.x, head.fc1, &grad_x, grads.fc1.weight, grads.fc1.bias);
}

// --- Model --------------------------------------------------------------

struct Model {
  ModelConfig config;
  MarginBranch margin;
  ResEncoder res_enc;
  PlainEncoder plain_enc;
  ConvLstmCell cell;
  Head risk_head, margin_head;
};

inline Model make_model(const ModelConfig& config, Rng& rng) {
  validate_config(config);
  Model m;
  m.config = config;
  m.config.fusion_ch = fusion_channels(config);
  const Variant v = config.variant;
  const std::size_t w = config.encoder_width;
  const std::size_t stack_ch = config.phases + 2;
  if (has_margin_branch(v)) m.margin = make_margin_branch(stack_ch, w, rng);
  if (uses_res_encoder(v))
    m.res_enc = make_res_encoder(early_fusion_input(v) ? stack_ch : config.channels_per_phase,
                                 w, rng);
  if (uses_plain_encoder(v))
    m.plain_enc = make_plain_encoder(
        early_fusion_input(v) ? stack_ch : config.channels_per_phase, w, rng);
  if (uses_convlstm(v)) m.cell = make_convlstm_cell(w, config.hidden_ch, 3, rng);
  if (has_risk_head(v)) m.risk_head = make_head(m.config.fusion_ch, rng);
  if (has_margin_head(v)) m.margin_head = make_head(m.config.fusion_ch, rng);
  return m;
}

// Trainable tensors in declaration order. Running statistics are model state
// but not parameters; state_tensors() appends them for checkpointing.
template <class M, class T>
inline void collect_tensors(M& m, std::vector<T*>& out, bool with_running) {
  auto bn = [&](auto& b) {
    out.push_back(&b.gamma);
    out.push_back(&b.beta);
    if (with_running) {
      out.push_back(&b.running_mean);
      out.push_back(&b.running_var);
    }
  };
  auto conv_bn = [&](auto& cb) {
    out.push_back(&cb.conv.weight);
    out.push_back(&cb.conv.bias);
    bn(cb.bn);
  };
  auto linear = [&](auto& l) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  };
  const Variant v = m.config.variant;
  if (has_margin_branch(v))
    for (auto& l : m.margin.layers) conv_bn(l);
  if (uses_res_encoder(v)) {
    conv_bn(m.res_enc.stem);
    for (auto& b : m.res_enc.blocks) {
      conv_bn(b.c1);
      conv_bn(b.c2);
      if (b.has_proj) conv_bn(b.proj);
    }
  }
  if (uses_plain_encoder(v))
    for (auto& l : m.plain_enc.layers) conv_bn(l);
  if (uses_convlstm(v)) {
    for (int g = 0; g < 4; ++g) {
      out.push_back(&m.cell.wx[g]);
      out.push_back(&m.cell.wh[g]);
      out.push_back(&m.cell.bias[g]);
    }
  }
  if (has_risk_head(v)) {
    linear(m.risk_head.fc1);
    linear(m.risk_head.fc2);
  }
  if (has_margin_head(v)) {
    linear(m.margin_head.fc1);
    linear(m.margin_head.fc2);
  }
}

inline std::vector<Tensor*> param_tensors(Model& m) {
  std::vector<Tensor*> out;
  collect_tensors(m, out, false);
  return out;
}
inline std::vector<const Tensor*> param_tensors(const Model& m) {
  std::vector<const Tensor*> out;
  collect_tensors(m, out, false);
  return out;
}
inline std::vector<Tensor*> state_tensors(Model& m) {
  std::vector<Tensor*> out;
  collect_tensors(m, out, true);
  return out;
}
inline std::vector<const Tensor*> state_tensors(const Model& m) {
  std::vector<const Tensor*> out;
  collect_tensors(m, out, true);
  return out;
}

inline Model make_zero_grads(const Model& m) {
  Model g = m;
  for (Tensor* t : state_tensors(g)) t->fill(0.0);
  return g;
}

// Closed-form parameter count; tested against param_tensors().
inline std::size_t param_count(const ModelConfig& config) {
  const std::size_t w = config.encoder_width, hid = config.hidden_ch;
  const std::size_t stack_ch = config.phases + 2;
  auto conv = [](std::size_t oc, std::size_t ic, std::size_t k) {
    return oc * (ic * k * k * k + 1);
  };
  auto conv_bn = [&](std::size_t oc, std::size_t ic) { return conv(oc, ic, 3) + 2 * oc; };
  auto res_block = [&](std::size_t ch, bool proj) {
    return 2 * conv_bn(ch, ch) + (proj ? conv(ch, ch, 1) + 2 * ch : 0);
  };
  auto head = [](std::size_t in) { return 64 * (in + 1) + (64 + 1); };
  const Variant v = config.variant;
  std::size_t total = 0;
  if (has_margin_branch(v))
    total += conv_bn(w, stack_ch) + conv_bn(w, w) + conv_bn(2 * w, w) +
             conv_bn(2 * w, 2 * w) + conv_bn(4 * w, 2 * w) + conv_bn(4 * w, 4 * w);
  const std::size_t enc_in =
      early_fusion_input(v) ? stack_ch : config.channels_per_phase;
  if (uses_res_encoder(v))
    total += conv_bn(w, enc_in) + res_block(w, false) + res_block(w, true) +
             res_block(w, false);
  if (uses_plain_encoder(v)) total += conv_bn(w, enc_in) + 3 * conv_bn(w, w);
  if (uses_convlstm(v)) total += 4 * (hid * w * 27 + hid * hid * 27 + hid);
  std::size_t fusion = fusion_channels(config);
  if (has_risk_head(v)) total += head(fusion);
  if (has_margin_head(v)) total += head(fusion);
  return total;
}

// --- Batched forward / backward ------------------------------------------

struct BatchInputs {
  std::vector<Tensor> phases;  // per phase [n, 3, s, s, s]
  Tensor stack;                // [n, phases + 2, s, s, s]
  std::size_t n = 0;
};

inline BatchInputs make_batch_inputs(const std::vector<const Patient*>& batch,
                                     const ModelConfig& config) {
  if (batch.empty()) throw shape_error("make_batch_inputs: empty batch");
  const std::size_t n = batch.size();
  const std::size_t s = config.input_extent;
  const std::size_t spatial = s * s * s;
  const std::vector<std::size_t> want{config.phases, config.channels_per_phase, s, s, s};
  for (const Patient* p : batch)
    if (p->volume.shape() != want)
      throw shape_error("batch volume " + p->volume.shape_str() + " does not match config " +
                        Tensor::shape_str(want));
  BatchInputs in;
  in.n = n;
  const bool need_phases = uses_convlstm(config.variant);
  const bool need_stack = has_margin_branch(config.variant) || early_fusion_input(config.variant);
  if (need_phases) {
    in.phases.assign(config.phases, Tensor());
    for (std::size_t t = 0; t < config.phases; ++t) {
      in.phases[t] = Tensor({n, config.channels_per_phase, s, s, s});
      for (std::size_t b = 0; b < n; ++b) {
        const double* src =
            batch[b]->volume.data() + t * config.channels_per_phase * spatial;
        double* dst = in.phases[t].data() + b * config.channels_per_phase * spatial;
        std::copy(src, src + config.channels_per_phase * spatial, dst);
      }
    }
  }
  if (need_stack) {
    const std::size_t sc = config.phases + 2;
    in.stack = Tensor({n, sc, s, s, s});
    for (std::size_t b = 0; b < n; ++b) {
      double* dst = in.stack.data() + b * sc * spatial;
      // CT channel of every phase, then the shared masks from phase 0.
      for (std::size_t t = 0; t < config.phases; ++t) {
        const double* ct =
            batch[b]->volume.data() + (t * config.channels_per_phase + 0) * spatial;
        std::copy(ct, ct + spatial, dst + t * spatial);
      }
      const double* mt = batch[b]->volume.data() + 1 * spatial;
      const double* mp = batch[b]->volume.data() + 2 * spatial;
      std::copy(mt, mt + spatial, dst + config.phases * spatial);
      std::copy(mp, mp + spatial, dst + (config.phases + 1) * spatial);
    }
  }
  return in;
}

struct ForwardCache {
  MarginBranchCache margin;
  Tensor margin_featmap;
  std::vector<ResEncoderCache> renc;
  std::vector<PlainEncoderCache> penc;
  std::vector<Tensor> enc_out;  // per phase (or single early-fusion map)
  std::vector<ConvLstmStepCache> lstm;
  std::vector<Tensor> hidden;  // H_t per step
  Tensor fused;
  HeadCache risk, marginh;
  std::size_t n = 0;
};

struct ModelOutput {
  std::vector<double> risk, margin_logit;
};

inline ModelOutput model_forward(Model& m, const BatchInputs& in, BnMode mode,
                                 ForwardCache* cache) {
  const ModelConfig& c = m.config;
  const Variant v = c.variant;
  const std::size_t n = in.n;
  if (cache) cache->n = n;

  Tensor margin_pooled, surv_pooled;
  if (has_margin_branch(v)) {
    Tensor fm = margin_branch_forward(in.stack, m.margin, c.phases + 2, mode,
                                      cache ? &cache->margin : nullptr);
    if (cache) cache->margin_featmap = fm;
    margin_pooled = global_avg_pool(fm);
  }

  if (has_risk_head(v)) {
    if (uses_convlstm(v)) {
      // Shared-weight encoder per phase, then the recurrence.
      std::vector<Tensor> enc_out(c.phases);
      if (cache) {
        if (uses_res_encoder(v)) cache->renc.assign(c.phases, {});
        if (uses_plain_encoder(v)) cache->penc.assign(c.phases, {});
      }
      for (std::size_t t = 0; t < c.phases; ++t) {
        if (uses_res_encoder(v))
          enc_out[t] = res_encoder_forward(in.phases[t], m.res_enc, mode,
                                           cache ? &cache->renc[t] : nullptr);
        else
          enc_out[t] = plain_encoder_forward(in.phases[t], m.plain_enc, mode,
                                             cache ? &cache->penc[t] : nullptr);
      }
      auto states = convlstm_unroll(enc_out, m.cell, cache ? &cache->lstm : nullptr);
      if (cache) {
        cache->enc_out = enc_out;
        cache->hidden.clear();
        for (auto& st : states) cache->hidden.push_back(st.h);
      }
      if (c.pool_states) {
        surv_pooled = Tensor::zeros({n, c.hidden_ch});
        for (auto& st : states) {
          Tensor p = global_avg_pool(st.h);
          for (std::size_t i = 0; i < p.size(); ++i)
            surv_pooled[i] += p[i] / static_cast<double>(states.size());
        }
      } else {
        surv_pooled = global_avg_pool(states.back().h);
      }
    } else {
      // Early fusion: one encoder pass over the 5-channel stack.
      Tensor fm;
      if (cache) {
        if (uses_res_encoder(v)) cache->renc.assign(1, {});
        if (uses_plain_encoder(v)) cache->penc.assign(1, {});
      }
      if (uses_res_encoder(v))
        fm = res_encoder_forward(in.stack, m.res_enc, mode,
                                 cache ? &cache->renc[0] : nullptr);
      else
        fm = plain_encoder_forward(in.stack, m.plain_enc, mode,
                                   cache ? &cache->penc[0] : nullptr);
      if (cache) cache->enc_out.assign(1, fm);
      surv_pooled = global_avg_pool(fm);
    }
  }

  // Common representation: margin features first, then survival features.
  Tensor fused;
  if (v == Variant::multi_task_ce_convlstm) {
    const std::size_t mc = margin_pooled.shape()[1], sc = surv_pooled.shape()[1];
    fused = Tensor({n, mc + sc});
    for (std::size_t b = 0; b < n; ++b) {
      std::copy(margin_pooled.data() + b * mc, margin_pooled.data() + (b + 1) * mc,
                fused.data() + b * (mc + sc));
      std::copy(surv_pooled.data() + b * sc, surv_pooled.data() + (b + 1) * sc,
                fused.data() + b * (mc + sc) + mc);
    }
  } else if (v == Variant::margin_only_cnn) {
    fused = margin_pooled;
  } else {
    fused = surv_pooled;
  }
  if (fused.shape()[1] != m.config.fusion_ch)
    throw shape_error("fusion: expected " + std::to_string(m.config.fusion_ch) +
                      " channels, got " + std::to_string(fused.shape()[1]));
  if (cache) cache->fused = fused;

  ModelOutput out;
  if (has_risk_head(v)) {
    Tensor y = head_forward(fused, m.risk_head, cache ? &cache->risk : nullptr);
    out.risk.assign(y.data(), y.data() + n);
  }
  if (has_margin_head(v)) {
    Tensor y = head_forward(fused, m.margin_head, cache ? &cache->marginh : nullptr);
    out.margin_logit.assign(y.data(), y.data() + n);
  }
  for (double r : out.risk)
    if (!std::isfinite(r)) throw numeric_error("model_forward: non-finite risk output");
  for (double r : out.margin_logit)
    if (!std::isfinite(r)) throw numeric_error("model_forward: non-finite margin logit");
  return out;
}

inline void model_backward(const Model& m, const ForwardCache& cache,
                           const std::vector<double>& grad_risk,
                           const std::vector<double>& grad_margin_logit, Model& grads) {
  const ModelConfig& c = m.config;
  const Variant v = c.variant;
  const std::size_t n = cache.n;

  Tensor grad_fused = Tensor::zeros(cache.fused.shape());
  if (has_risk_head(v)) {
    if (grad_risk.size() != n) throw shape_error("model_backward: grad_risk size");
    Tensor gy({n, 1});
    for (std::size_t b = 0; b < n; ++b) gy[b] = grad_risk[b];
    Tensor gx(cache.fused.shape());
    head_backward(gy, cache.risk, m.risk_head, grads.risk_head, gx);
    for (std::size_t i = 0; i < gx.size(); ++i) grad_fused[i] += gx[i];
  }
  if (has_margin_head(v)) {
    if (grad_margin_logit.size() != n) throw shape_error("model_backward: grad_margin size");
    Tensor gy({n, 1});
    for (std::size_t b = 0; b < n; ++b) gy[b] = grad_margin_logit[b];
    Tensor gx(cache.fused.shape());
    head_backward(gy, cache.marginh, m.margin_head, grads.margin_head, gx);
    for (std::size_t i = 0; i < gx.size(); ++i) grad_fused[i] += gx[i];
  }

  // Split the fused gradient back into branch parts.
  Tensor grad_margin_pooled, grad_surv_pooled;
  if (v == Variant::multi_task_ce_convlstm) {
    const std::size_t mc = margin_feature_ch(c), sc = survival_feature_ch(c);
    grad_margin_pooled = Tensor({n, mc});
    grad_surv_pooled = Tensor({n, sc});
    for (std::size_t b = 0; b < n; ++b) {
      std::copy(grad_fused.data() + b * (mc + sc), grad_fused.data() + b * (mc + sc) + mc,
                grad_margin_pooled.data() + b * mc);
      std::copy(grad_fused.data() + b * (mc + sc) + mc,
                grad_fused.data() + (b + 1) * (mc + sc), grad_surv_pooled.data() + b * sc);
    }
  } else if (v == Variant::margin_only_cnn) {
    grad_margin_pooled = grad_fused;
  } else {
    grad_surv_pooled = grad_fused;
  }

  if (has_margin_branch(v)) {
    Tensor gfm = global_avg_pool_backward(grad_margin_pooled, cache.margin_featmap.shape());
    margin_branch_backward(gfm, cache.margin, m.margin, grads.margin);
  }

  if (has_risk_head(v)) {
    if (uses_convlstm(v)) {
      std::vector<Tensor> gh_steps(c.phases);
      const auto& h_shape = cache.hidden.back().shape();
      if (c.pool_states) {
        Tensor scaled(grad_surv_pooled.shape());
        for (std::size_t i = 0; i < scaled.size(); ++i)
          scaled[i] = grad_surv_pooled[i] / static_cast<double>(c.phases);
        for (std::size_t t = 0; t < c.phases; ++t)
          gh_steps[t] = global_avg_pool_backward(scaled, h_shape);
      } else {
        gh_steps[c.phases - 1] = global_avg_pool_backward(grad_surv_pooled, h_shape);
      }
      ConvLstmGrads cg = make_convlstm_grads(m.cell);
      auto grad_xs = convlstm_unroll_backward(gh_steps, cache.lstm, m.cell, cg);
      for (int g = 0; g < 4; ++g) {
        axpy(1.0, cg.wx[g], grads.cell.wx[g]);
        axpy(1.0, cg.wh[g], grads.cell.wh[g]);
        axpy(1.0, cg.bias[g], grads.cell.bias[g]);
      }
      for (std::size_t t = 0; t < c.phases; ++t) {
        if (uses_res_encoder(v))
          res_encoder_backward(grad_xs[t], cache.renc[t], m.res_enc, grads.res_enc);
        else
          plain_encoder_backward(grad_xs[t], cache.penc[t], m.plain_enc, grads.plain_enc);
      }
    } else {
      Tensor gfm = global_avg_pool_backward(grad_surv_pooled, cache.enc_out[0].shape());
      if (uses_res_encoder(v))
        res_encoder_backward(gfm, cache.renc[0], m.res_enc, grads.res_enc);
      else
        plain_encoder_backward(gfm, cache.penc[0], m.plain_enc, grads.plain_enc);
    }
  }
}

struct LossBreakdown {
  double total = 0.0, survival = 0.0, margin = 0.0;
  std::size_t n_events = 0;
};

// Full training step pass: forward in train mode, loss, gradients.
// Throws skip_batch when the survival loss is active but no event is present.
inline LossBreakdown forward_backward(Model& m, const std::vector<const Patient*>& batch,
                                      double pos_weight, Model& grads,
                                      std::vector<double>* out_risk = nullptr) {
  const Variant v = m.config.variant;
  if (batch.size() < 2) throw shape_error("forward_backward: batch size must be >= 2");
  std::vector<SurvivalLabel> slabels;
  std::vector<int> mlabels;
  for (const Patient* p : batch) {
    slabels.push_back(p->survival);
    mlabels.push_back(p->margin);
  }
  if (has_risk_head(v)) {
    std::size_t events = 0;
    for (const auto& l : slabels) events += l.event ? 1 : 0;
    if (events == 0) throw skip_batch("forward_backward: no events in batch");
  }

  BatchInputs in = make_batch_inputs(batch, m.config);
  ForwardCache cache;
  ModelOutput out = model_forward(m, in, BnMode::train, &cache);
  if (out_risk) *out_risk = out.risk;

  LossBreakdown lb;
  std::vector<double> grad_risk, grad_margin;
  if (has_risk_head(v)) {
    LossResult cox = cox_loss(out.risk, slabels);
    lb.survival = cox.loss;
    grad_risk = cox.grad;
    for (const auto& l : slabels) lb.n_events += l.event ? 1 : 0;
  }
  if (has_margin_head(v)) {
    LossResult bce = weighted_bce(out.margin_logit, mlabels, pos_weight);
    lb.margin = bce.loss;
    grad_margin = bce.grad;
    const double lw = v == Variant::margin_only_cnn ? 1.0 : m.config.loss_weight_margin;
    for (double& g : grad_margin) g *= lw;
    lb.margin *= lw;
  }
  lb.total = lb.survival + lb.margin;
  model_backward(m, cache, grad_risk, grad_margin, grads);
  return lb;
}

}  // namespace cepn
