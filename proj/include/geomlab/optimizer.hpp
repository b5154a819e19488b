#pragma once

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "geomlab/common.hpp"
#include "geomlab/params.hpp"

namespace geomlab {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction. Frozen parameters are never read or
// written; trainable parameters must carry a populated gradient.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return step_; }

  void step(ParamSet<T>& ps) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& e : ps.entries()) {
      if (!e.trainable) continue;
      if (!e.value.has_grad())
        throw Error("adam: trainable parameter '" + e.name + "' has no gradient");
      auto& m = moments_[e.name];
      if (m.m.empty()) {
        m.m.assign(e.value.data.size(), T(0));
        m.v.assign(e.value.data.size(), T(0));
      }
      const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
      const T ab1 = static_cast<T>(1.0 - cfg_.beta1), ab2 = static_cast<T>(1.0 - cfg_.beta2);
      for (size_t i = 0; i < e.value.data.size(); ++i) {
        const T g = e.value.grad[i];
        m.m[i] = b1 * m.m[i] + ab1 * g;
        m.v[i] = b2 * m.v[i] + ab2 * g * g;
        const double mh = static_cast<double>(m.m[i]) / bc1;
        const double vh = static_cast<double>(m.v[i]) / bc2;
        e.value.data[i] -= static_cast<T>(cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

 private:
  struct Moments {
    std::vector<T> m, v;
  };
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

}  // namespace geomlab
