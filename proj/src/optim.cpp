#include "topoloc/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace topoloc {

void Optimizer::step(ParamSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size())
    throw std::invalid_argument("optimizer: " + std::to_string(grads.size()) + " gradients for " +
                                std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i) require_same_shape(params[i].value, grads[i], "optimizer");

  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].value.rows(), params[i].value.cols());
      v_.emplace_back(params[i].value.rows(), params[i].value.cols());
    }
  }
  ++t_;

  double clip = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i)
      if (params[i].group != ParamGroup::buffer)
        for (double g : grads[i].data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) clip = cfg_.clip_norm / norm;
  }

  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = params[i];
    if (p.group == ParamGroup::buffer) continue;
    const double lr = p.group == ParamGroup::encoder ? cfg_.lr_encoder : cfg_.lr_main;
    Tensor& w = p.value;
    const Tensor& g = grads[i];
    if (cfg_.kind == OptimizerKind::sgd) {
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * clip * g[j];
      continue;
    }
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = clip * g[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg_.eps);
    }
  }
}

}  // namespace topoloc
