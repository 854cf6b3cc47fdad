#pragma once

#include <functional>
#include <string>
#include <vector>

#include "topoloc/params.hpp"
#include "topoloc/tape.hpp"

namespace topoloc {

/// Builds a scalar loss on `tape` from `params`. Must be deterministic.
using LossFn = std::function<ad::Var(ad::Tape& tape, const ParamSet& params)>;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double worst() const;
  bool passed(double tolerance) const { return worst() < tolerance; }
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor);
  /// the floor keeps near-zero gradients from turning round-off into huge ratios.
  double floor = 1e-4;
  /// Buffers are skipped; they are not differentiated.
  bool include_buffers = false;
};

/// Compares reverse-mode gradients of `loss` against central finite differences
/// for every scalar of every parameter.
GradCheckReport grad_check(const LossFn& loss, const ParamSet& params,
                           const GradCheckOptions& opts = {});

}  // namespace topoloc
