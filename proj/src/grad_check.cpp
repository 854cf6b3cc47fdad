#include "topoloc/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace topoloc {

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

GradCheckReport grad_check(const LossFn& loss, const ParamSet& params, const GradCheckOptions& opts) {
  std::vector<Tensor> analytic;
  {
    ad::Tape tape;
    ad::Var l = loss(tape, params);
    tape.backward(l);
    analytic = tape.param_grads(params);
  }

  auto eval = [&](const ParamSet& p) {
    ad::Tape tape;
    return loss(tape, p).value().item();
  };

  GradCheckReport report;
  ParamSet probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].group == ParamGroup::buffer && !opts.include_buffers) continue;
    GradCheckEntry entry{params[i].name, 0.0, 0.0};
    for (std::size_t j = 0; j < params[i].value.size(); ++j) {
      const double orig = params[i].value[j];
      probe[i].value[j] = orig + opts.step;
      const double up = eval(probe);
      probe[i].value[j] = orig - opts.step;
      const double down = eval(probe);
      probe[i].value[j] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[i][j];
      const double abs_err = std::abs(a - numeric);
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace topoloc
