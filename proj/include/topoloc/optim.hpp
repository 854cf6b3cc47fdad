#pragma once

#include <cstdint>
#include <vector>

#include "topoloc/params.hpp"

namespace topoloc {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr_main = 1e-3;
  double lr_encoder = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global-norm clip applied before the update; <= 0 disables it.
  double clip_norm = 0.0;
};

/// Adam (or plain SGD) over a ParamSet with separate learning rates for the
/// encoder group and everything else. Buffer parameters are never updated.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  /// Throws std::invalid_argument when grads do not match params one-to-one.
  void step(ParamSet& params, const std::vector<Tensor>& grads);

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t steps() const { return t_; }

 private:
  OptimizerConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace topoloc
