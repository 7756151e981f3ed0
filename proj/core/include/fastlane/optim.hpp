#pragma once

#include <cstddef>
#include <vector>

#include "fastlane/autodiff.hpp"

namespace fastlane {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay: p -= lr * (wd * p + m_hat / (sqrt(v_hat) + eps)).
// Parameters with requires_grad off are skipped (their moments do not advance).
class AdamW {
 public:
  AdamW(ParameterStore& params, AdamWConfig cfg = {});

  void step(double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  ParameterStore& params_;
  AdamWConfig cfg_;
  std::vector<Moments> state_;
  std::size_t t_ = 0;
};

// Linear warmup 0 -> lr over `warmup` steps, then cosine decay to 0 at `total`.
double lr_schedule(std::size_t step, double lr, std::size_t warmup, std::size_t total);

}  // namespace fastlane
