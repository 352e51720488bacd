#pragma once

#include <vector>

#include "vrfm/nn.hpp"

namespace vrfm {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

struct OptimizerState {
  long step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  AdamWConfig hyper;
};

OptimizerState make_optimizer_state(const std::vector<Parameter>& params, AdamWConfig cfg);

/// One AdamW update with bias correction. Weight decay is decoupled and
/// applied before the adaptive step: p <- p - lr*wd*p. Throws NumericsError
/// naming the parameter if its gradient is non-finite.
void adamw_step(std::vector<Parameter>& params, const std::vector<Matrix>& grads,
                OptimizerState& state);

}  // namespace vrfm
