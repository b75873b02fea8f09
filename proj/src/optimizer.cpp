#include "nkgad/optimizer.hpp"

#include <cmath>

#include "nkgad/error.hpp"

namespace nkgad {

void optimizer_step(ParamSet& params, const GradSet& grads, AdamState& state, double lr,
                    double weight_decay, const AdamConfig& config) {
  if (!grads.congruent_with(params)) throw ShapeError("optimizer_step: gradients do not match parameters");
  if (!(lr > 0.0)) throw ConfigError("optimizer_step: learning rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("optimizer_step: weight decay must be nonnegative");

  if (state.first.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.first.emplace_back(params.value(i).rows(), params.value(i).cols());
      state.second.emplace_back(params.value(i).rows(), params.value(i).cols());
    }
  } else if (state.first.size() != params.size()) {
    throw ShapeError("optimizer_step: optimizer state belongs to a different parameter set");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params.trainable(i)) continue;
    Matrix& p = params.mutable_value(i);
    Matrix& m = state.first[i];
    Matrix& v = state.second[i];
    const Matrix& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      p[k] -= lr * (m_hat / (std::sqrt(v_hat) + config.eps) + weight_decay * p[k]);
    }
  }
}

}  // namespace nkgad
