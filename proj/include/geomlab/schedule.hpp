#pragma once

#include <cmath>
#include <vector>

#include "geomlab/common.hpp"
#include "geomlab/tensor.hpp"

namespace geomlab {

// DDPM noise schedule: linear betas, alpha_bar[0] defined as 1.
struct NoiseSchedule {
  int steps = 200;
  std::vector<double> beta;       // [0] unused
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative product, [0] == 1

  static NoiseSchedule linear(int steps = 200, double beta_lo = 1e-4, double beta_hi = 0.02) {
    if (steps < 1) throw ConfigError("schedule: steps must be >= 1");
    NoiseSchedule s;
    s.steps = steps;
    s.beta.assign(static_cast<size_t>(steps) + 1, 0.0);
    s.alpha.assign(static_cast<size_t>(steps) + 1, 1.0);
    s.alpha_bar.assign(static_cast<size_t>(steps) + 1, 1.0);
    for (int t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
      s.beta[static_cast<size_t>(t)] = beta_lo + (beta_hi - beta_lo) * frac;
      s.alpha[static_cast<size_t>(t)] = 1.0 - s.beta[static_cast<size_t>(t)];
      s.alpha_bar[static_cast<size_t>(t)] =
          s.alpha_bar[static_cast<size_t>(t - 1)] * s.alpha[static_cast<size_t>(t)];
    }
    return s;
  }

  double abar(int t) const {
    if (t < 0 || t > steps) throw Error(strformat("schedule: t=%d outside [0,%d]", t, steps));
    return alpha_bar[static_cast<size_t>(t)];
  }
};

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
template <typename T>
Tensor<T> forward_noise(const Tensor<T>& z0, int t, const Tensor<T>& eps,
                        const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps)
    throw Error(strformat("forward_noise: t=%d outside [1,%d]", t, sched.steps));
  if (!z0.same_shape(eps)) throw ShapeError("forward_noise: eps shape differs from z0");
  const T a = static_cast<T>(std::sqrt(sched.abar(t)));
  const T b = static_cast<T>(std::sqrt(1.0 - sched.abar(t)));
  Tensor<T> out = z0;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a * z0.data[i] + b * eps.data[i];
  return out;
}

}  // namespace geomlab
