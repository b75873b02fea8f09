#pragma once

#include <cstdint>
#include <vector>

#include "nkgad/params.hpp"

namespace nkgad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one pair per ParamSet leaf.
struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::uint64_t step = 0;
};

/// One Adam step with decoupled weight decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
/// Non-trainable leaves are left untouched. Moments are allocated on the
/// first call.
void optimizer_step(ParamSet& params, const GradSet& grads, AdamState& state, double lr,
                    double weight_decay, const AdamConfig& config = {});

}  // namespace nkgad
