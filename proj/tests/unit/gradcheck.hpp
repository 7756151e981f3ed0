#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fastlane/autodiff.hpp"
#include "fastlane/rng.hpp"

namespace fastlane::gradcheck {

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, scale);
  return t;
}

inline double eval_at(const Fn& f, const std::vector<Tensor>& xs) {
  Tape tape;
  tape.set_grad_enabled(false);
  std::vector<Var> vars;
  for (const auto& x : xs) vars.push_back(tape.constant(x));
  return f(tape, vars).value()[0];
}

// Largest |analytic - central FD| / max(1, |FD|) over every input coordinate.
inline double max_grad_error(const Fn& f, std::vector<Tensor> xs, double h = 1e-6) {
  ParameterStore store;
  std::vector<Parameter*> ps;
  for (std::size_t i = 0; i < xs.size(); ++i) ps.push_back(&store.add("x" + std::to_string(i), xs[i]));
  Tape tape;
  std::vector<Var> vars;
  for (auto* p : ps) vars.push_back(tape.leaf(*p));
  tape.backward(f(tape, vars));

  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t k = 0; k < xs[i].size(); ++k) {
      const double keep = xs[i][k];
      xs[i][k] = keep + h;
      const double up = eval_at(f, xs);
      xs[i][k] = keep - h;
      const double down = eval_at(f, xs);
      xs[i][k] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(ps[i]->grad[k] - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace fastlane::gradcheck
