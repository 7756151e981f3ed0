#include "fastlane/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fastlane/errors.hpp"

namespace fastlane {

AdamW::AdamW(ParameterStore& params, AdamWConfig cfg) : params_(params), cfg_(cfg) {
  if (cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1) {
    throw ConfigError("adamw: betas must lie in [0, 1)");
  }
  if (cfg_.eps <= 0 || cfg_.weight_decay < 0) throw ConfigError("adamw: eps must be > 0 and weight_decay >= 0");
}

void AdamW::step(double lr) {
  ++t_;
  std::size_t i = 0;
  for (auto& p : params_) {
    if (state_.size() <= i) state_.push_back({std::vector<double>(p.value.size(), 0.0),
                                              std::vector<double>(p.value.size(), 0.0), 0});
    auto& s = state_[i++];
    if (!p.requires_grad) continue;
    if (p.grad.size() != p.value.size()) throw DimensionError("adamw: gradient shape mismatch for " + p.name);
    ++s.t;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
    auto w = p.value.data();
    auto g = p.grad.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      s.m[k] = cfg_.beta1 * s.m[k] + (1.0 - cfg_.beta1) * g[k];
      s.v[k] = cfg_.beta2 * s.v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mh = s.m[k] / c1;
      const double vh = s.v[k] / c2;
      w[k] -= lr * (cfg_.weight_decay * w[k] + mh / (std::sqrt(vh) + cfg_.eps));
    }
  }
}

double lr_schedule(std::size_t step, double lr, std::size_t warmup, std::size_t total) {
  if (total < warmup) throw ConfigError("lr_schedule: total_steps < warmup_steps");
  if (step > total) {
    throw ContractError("lr_schedule: step " + std::to_string(step) + " past total " + std::to_string(total));
  }
  if (step < warmup) return lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (total == warmup) return lr;
  const double progress = static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace fastlane
