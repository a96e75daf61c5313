#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cepn/error.hpp"
#include "cepn/prognet.hpp"

namespace cepn {

enum class OptimizerKind { adam, sgd_momentum };

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd_momentum" || s == "sgd") return OptimizerKind::sgd_momentum;
  throw config_error("unknown optimizer '" + s + "' (adam | sgd_momentum)");
}

// Adam (standard moment constants) or SGD with momentum over the model's
// trainable tensors. Slot buffers are keyed by tensor position, so the
// optimizer must always see the same model object.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  void step(Model& model, const Model& grads) {
    auto params = param_tensors(model);
    auto gs = param_tensors(grads);
    if (params.size() != gs.size())
      throw shape_error("optimizer: model/grads tensor count mismatch");
    if (slots_.empty()) {
      slots_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        slots_[i].m = Tensor::zeros(params[i]->shape());
        if (kind_ == OptimizerKind::adam) slots_[i].v = Tensor::zeros(params[i]->shape());
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i];
      const Tensor& g = *gs[i];
      require_same_shape(p, g, "optimizer step");
      Slot& s = slots_[i];
      if (kind_ == OptimizerKind::adam) {
        for (std::size_t j = 0; j < p.size(); ++j) {
          s.m[j] = beta1_ * s.m[j] + (1.0 - beta1_) * g[j];
          s.v[j] = beta2_ * s.v[j] + (1.0 - beta2_) * g[j] * g[j];
          const double mhat = s.m[j] / bc1;
          const double vhat = s.v[j] / bc2;
          p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
      } else {
        for (std::size_t j = 0; j < p.size(); ++j) {
          s.m[j] = momentum_ * s.m[j] + g[j];
          p[j] -= lr_ * s.m[j];
        }
      }
    }
  }

  double lr() const { return lr_; }

 private:
  struct Slot {
    Tensor m, v;
  };
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  double momentum_ = 0.9;
  std::vector<Slot> slots_;
  std::size_t t_ = 0;
};

}  // namespace cepn
