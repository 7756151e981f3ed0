#include "fastlane/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fastlane/errors.hpp"

namespace fastlane {

// ---------------------------------------------------------------------------
// ParameterStore

Parameter& ParameterStore::add(std::string name, Tensor init, bool requires_grad) {
  if (by_name_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  by_name_.emplace(name, params_.size());
  Tensor grad(init.shape(), 0.0);
  params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad), requires_grad});
  return params_.back();
}

Parameter& ParameterStore::get(const std::string& name) {
  auto* p = find(name);
  if (!p) throw ConfigError("unknown parameter: " + name);
  return *p;
}

const Parameter& ParameterStore::get(const std::string& name) const {
  const auto* p = find(name);
  if (!p) throw ConfigError("unknown parameter: " + name);
  return *p;
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : &params_[it->second];
}

std::size_t ParameterStore::total_values() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape->value(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Parameter& p) {
  if (auto it = leaves_.find(&p); it != leaves_.end() && nodes_[it->second].requires_grad == (grad_enabled_ && p.requires_grad)) {
    return Var{this, it->second};
  }
  Node n;
  n.op = "leaf";
  n.value = p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_ && p.requires_grad;
  nodes_.push_back(std::move(n));
  leaves_[&p] = nodes_.size() - 1;
  return Var{this, nodes_.size() - 1};
}

Var Tape::gather(Parameter& p, const std::vector<std::size_t>& rows) {
  const auto& v = p.value;
  if (v.rank() != 2) throw DimensionError("gather: parameter " + p.name + " is not a matrix");
  const std::size_t r = v.shape()[0], c = v.shape()[1];
  Node n;
  n.op = "gather";
  n.value = Tensor({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= r) {
      throw DimensionError("gather: row " + std::to_string(rows[i]) + " out of range for " + p.name + " " +
                           shape_to_string(v.shape()));
    }
    std::copy_n(v.data().data() + rows[i] * c, c, n.value.data().data() + i * c);
  }
  n.param = &p;
  n.rows = rows;
  n.gathered = true;
  n.requires_grad = grad_enabled_ && p.requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (grad_enabled_) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](std::size_t i) { return nodes_[i].requires_grad; });
  }
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(fn);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.grad.shape() == n.value.shape()) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

void Tape::backward(Var root) {
  if (root.tape != this) throw ContractError("backward: root belongs to a different tape");
  if (nodes_[root.id].value.size() != 1) {
    throw ContractError("backward: root must be a scalar, got shape " +
                        shape_to_string(nodes_[root.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[root.id].requires_grad) return;
  grad_buffer(root.id)[0] = 1.0;
  for (std::size_t k = root.id + 1; k-- > 0;) {
    auto& n = nodes_[k];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.gathered) {
      auto& pg = n.param->grad;
      const std::size_t c = n.value.shape()[1];
      for (std::size_t i = 0; i < n.rows.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) pg[n.rows[i] * c + j] += n.grad[i * c + j];
    } else if (n.param) {
      auto& pg = n.param->grad;
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, k);
    }
  }
}

// ---------------------------------------------------------------------------
// ops

namespace ad {
namespace {

std::size_t nrows(const Tensor& t) { return t.rank() == 1 ? 1 : t.shape()[0]; }
std::size_t ncols(const Tensor& t) { return t.rank() == 1 ? t.shape()[0] : t.shape()[1]; }

void require_rank_le2(const Tensor& t, const char* op) {
  if (t.rank() < 1 || t.rank() > 2) {
    throw DimensionError(std::string(op) + ": expected rank 1 or 2, got " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
  return *a.tape;
}

// Adds `g` (same size) into the gradient buffer of `id` if it needs one.
void accumulate(Tape& t, std::size_t id, const Tensor& g) {
  if (!t.requires_grad(id)) return;
  auto& buf = t.grad_buffer(id);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

template <typename F>
Var unary(Var a, const char* op, F&& f, double (*df)(double x, double y)) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.tape->record(op, std::move(y), {a.id}, [ia = a.id, df](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    const auto& xv = t.value(ia);
    const auto& yv = t.value(self);
    auto& buf = t.grad_buffer(ia);
    for (std::size_t i = 0; i < buf.size(); ++i) {
      if (g[i] != 0.0) buf[i] += g[i] * df(xv[i], yv[i]);
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  auto& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return t.record("add", std::move(y), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    accumulate(t, ia, t.upstream(self));
    accumulate(t, ib, t.upstream(self));
  });
}

Var sub(Var a, Var b) {
  auto& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return t.record("sub", std::move(y), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    accumulate(t, ia, t.upstream(self));
    if (t.requires_grad(ib)) {
      const auto& g = t.upstream(self);
      auto& buf = t.grad_buffer(ib);
      for (std::size_t i = 0; i < buf.size(); ++i) buf[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  auto& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return t.record("mul", std::move(y), {a.id, b.id}, [ia = a.id, ib = b.id](Tape& t, std::size_t self) {
    const auto& g = t.upstream(self);
    if (t.requires_grad(ia)) {
      const auto& bv = t.value(ib);
      auto& buf = t.grad_buffer(ia);
      for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      const auto& av = t.value(ia);
      auto& buf = t.grad_buffer(ib);
      for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.data()) v *= s;
  return a.tape->record("scale", std::move(y), {a.id}, [ia = a.id, s](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    auto& buf = t.grad_buffer(ia);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += s * g[i];
  });
}

Var add_scalar(Var a, double s) {
  Tensor y = a.value();
  for (auto& v : y.data()) v += s;
  return a.tape->record("add_scalar", std::move(y), {a.id},
                        [ia = a.id](Tape& t, std::size_t self) { accumulate(t, ia, t.upstream(self)); });
}

Var add_row(Var a, Var bias) {
  auto& t = tape_of(a, bias);
  const auto& av = a.value();
  const auto& bv = bias.value();
  require_rank_le2(av, "add_row");
  const std::size_t r = nrows(av), c = ncols(av);
  if (bv.size() != c) {
    throw DimensionError("add_row: bias " + shape_to_string(bv.shape()) + " vs rows of " +
                         shape_to_string(av.shape()));
  }
  Tensor y = av;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] += bv[j];
  return t.record("add_row", std::move(y), {a.id, bias.id},
                  [ia = a.id, ib = bias.id, r, c](Tape& t, std::size_t self) {
                    const auto& g = t.upstream(self);
                    accumulate(t, ia, g);
                    if (t.requires_grad(ib)) {
                      auto& buf = t.grad_buffer(ib);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) buf[j] += g[i * c + j];
                    }
                  });
}

namespace {

// out[r x c] += a[r x k] * b[k x c]
void gemm_nn(const double* a, const double* b, double* out, std::size_t r, std::size_t k, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    double* orow = out + i * c;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[r x k] += g[r x c] * b[k x c]^T
void gemm_nt(const double* g, const double* b, double* out, std::size_t r, std::size_t c, std::size_t k) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* grow = g + i * c;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * c;
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += grow[j] * brow[j];
      out[i * k + p] += s;
    }
  }
}

// out[k x c] += a[r x k]^T * g[r x c]
void gemm_tn(const double* a, const double* g, double* out, std::size_t r, std::size_t k, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* grow = g + i * c;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* orow = out + p * c;
      for (std::size_t j = 0; j < c; ++j) orow[j] += av * grow[j];
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  auto& t = tape_of(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_to_string(av.shape()) + " and " +
                         shape_to_string(bv.shape()));
  }
  const std::size_t r = av.shape()[0], k = av.shape()[1], c = bv.shape()[1];
  Tensor y({r, c}, 0.0);
  gemm_nn(av.data().data(), bv.data().data(), y.data().data(), r, k, c);
  return t.record("matmul", std::move(y), {a.id, b.id},
                  [ia = a.id, ib = b.id, r, k, c](Tape& t, std::size_t self) {
                    const auto& g = t.upstream(self);
                    if (t.requires_grad(ia)) {
                      gemm_nt(g.data().data(), t.value(ib).data().data(), t.grad_buffer(ia).data().data(), r, c, k);
                    }
                    if (t.requires_grad(ib)) {
                      gemm_tn(t.value(ia).data().data(), g.data().data(), t.grad_buffer(ib).data().data(), r, k, c);
                    }
                  });
}

Var transpose(Var a) {
  const auto& av = a.value();
  require_rank_le2(av, "transpose");
  const std::size_t r = nrows(av), c = ncols(av);
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = av[i * c + j];
  return a.tape->record("transpose", std::move(y), {a.id}, [ia = a.id, r, c](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    auto& buf = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) buf[i * c + j] += g[j * r + i];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return a.tape->record("reshape", std::move(y), {a.id},
                        [ia = a.id](Tape& t, std::size_t self) { accumulate(t, ia, t.upstream(self)); });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.tape->record("sum", Tensor::scalar(s), {a.id}, [ia = a.id](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.upstream(self)[0];
    for (auto& v : t.grad_buffer(ia).data()) v += g;
  });
}

Var sum_axis(Var a, int axis) {
  const auto& av = a.value();
  require_rank_le2(av, "sum_axis");
  const std::size_t r = nrows(av), c = ncols(av);
  if (axis != 0 && axis != 1) throw DimensionError("sum_axis: axis must be 0 or 1");
  Tensor y(Shape{axis == 0 ? c : r}, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[axis == 0 ? j : i] += av[i * c + j];
  return a.tape->record("sum_axis", std::move(y), {a.id}, [ia = a.id, r, c, axis](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    auto& buf = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) buf[i * c + j] += g[axis == 0 ? j : i];
  });
}

Var dot(Var a, Var b) {
  if (a.value().size() != b.value().size()) {
    throw DimensionError("dot: shape mismatch " + shape_to_string(a.value().shape()) + " vs " +
                         shape_to_string(b.value().shape()));
  }
  if (a.value().shape() != b.value().shape()) b = reshape(b, a.value().shape());
  return sum(mul(a, b));
}

Var exp(Var a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  // d/dx log x = 1/x; a zero upstream gradient is skipped so log(0) entries
  // that carry no gradient do not produce NaN.
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var a) {
  return unary(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softmax(Var a) {
  const auto& av = a.value();
  require_rank_le2(av, "softmax");
  const std::size_t r = nrows(av), c = ncols(av);
  Tensor y(av.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = av.data().data() + i * c;
    double* o = y.data().data() + i * c;
    const double m = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (o[j] = std::exp(x[j] - m));
    for (std::size_t j = 0; j < c; ++j) o[j] /= z;
  }
  return a.tape->record("softmax", std::move(y), {a.id}, [ia = a.id, r, c](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    const auto& yv = t.value(self);
    auto& buf = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * yv[i * c + j];
      for (std::size_t j = 0; j < c; ++j) buf[i * c + j] += yv[i * c + j] * (g[i * c + j] - s);
    }
  });
}

Var l2_normalize_rows(Var a) {
  const auto& av = a.value();
  require_rank_le2(av, "l2_normalize_rows");
  const std::size_t r = nrows(av), c = ncols(av);
  Tensor y(av.shape());
  std::vector<double> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += av[i * c + j] * av[i * c + j];
    norms[i] = std::sqrt(s);
    const double inv = norms[i] > 0.0 ? 1.0 / norms[i] : 0.0;
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = av[i * c + j] * inv;
  }
  return a.tape->record("l2_normalize_rows", std::move(y), {a.id},
                        [ia = a.id, r, c, norms = std::move(norms)](Tape& t, std::size_t self) {
                          if (!t.requires_grad(ia)) return;
                          const auto& g = t.upstream(self);
                          const auto& yv = t.value(self);
                          auto& buf = t.grad_buffer(ia);
                          for (std::size_t i = 0; i < r; ++i) {
                            if (norms[i] == 0.0) continue;
                            double s = 0.0;
                            for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * yv[i * c + j];
                            for (std::size_t j = 0; j < c; ++j)
                              buf[i * c + j] += (g[i * c + j] - s * yv[i * c + j]) / norms[i];
                          }
                        });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  auto& t = tape_of(x, gamma);
  tape_of(x, beta);
  const auto& xv = x.value();
  require_rank_le2(xv, "layer_norm");
  const std::size_t r = nrows(xv), c = ncols(xv);
  if (gamma.value().size() != c || beta.value().size() != c) {
    throw DimensionError("layer_norm: gain/bias size does not match width " + std::to_string(c));
  }
  const auto& gv = gamma.value();
  const auto& bv = beta.value();
  Tensor y(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += xv[i * c + j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xv[i * c + j] - mean) * (xv[i * c + j] - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xv[i * c + j] - mean) * inv_std[i];
      y[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    }
  }
  return t.record("layer_norm", std::move(y), {x.id, gamma.id, beta.id},
                  [ix = x.id, ig = gamma.id, ib = beta.id, r, c, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
                    const auto& g = t.upstream(self);
                    const auto& gv = t.value(ig);
                    if (t.requires_grad(ig)) {
                      auto& buf = t.grad_buffer(ig);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) buf[j] += g[i * c + j] * xhat[i * c + j];
                    }
                    if (t.requires_grad(ib)) {
                      auto& buf = t.grad_buffer(ib);
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) buf[j] += g[i * c + j];
                    }
                    if (t.requires_grad(ix)) {
                      auto& buf = t.grad_buffer(ix);
                      const double n = static_cast<double>(c);
                      for (std::size_t i = 0; i < r; ++i) {
                        double s1 = 0.0, s2 = 0.0;
                        for (std::size_t j = 0; j < c; ++j) {
                          const double dxh = g[i * c + j] * gv[j];
                          s1 += dxh;
                          s2 += dxh * xhat[i * c + j];
                        }
                        for (std::size_t j = 0; j < c; ++j) {
                          const double dxh = g[i * c + j] * gv[j];
                          buf[i * c + j] += inv_std[i] / n * (n * dxh - s1 - xhat[i * c + j] * s2);
                        }
                      }
                    }
                  });
}

Var normalize_sum(Var a) {
  const auto& av = a.value();
  if (av.rank() != 1) throw DimensionError("normalize_sum: expected rank 1, got " + shape_to_string(av.shape()));
  double s = 0.0;
  for (double v : av.data()) s += v;
  if (!(s > 0.0)) throw ContractError("normalize_sum: non-positive total");
  Tensor y = av;
  for (auto& v : y.data()) v /= s;
  return a.tape->record("normalize_sum", std::move(y), {a.id}, [ia = a.id, s](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    const auto& yv = t.value(self);
    double gy = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * yv[i];
    auto& buf = t.grad_buffer(ia);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += (g[i] - gy) / s;
  });
}

MaxResult max_axis(Var a, int axis) {
  const auto& av = a.value();
  require_rank_le2(av, "max_axis");
  if (axis != 0 && axis != 1) throw DimensionError("max_axis: axis must be 0 or 1");
  const std::size_t r = nrows(av), c = ncols(av);
  const std::size_t out_n = axis == 0 ? c : r;
  Tensor y(Shape{out_n});
  std::vector<std::size_t> arg(out_n);
  // Flat index of the winning element; first occurrence wins ties.
  std::vector<std::size_t> flat(out_n);
  for (std::size_t o = 0; o < out_n; ++o) {
    const std::size_t len = axis == 0 ? r : c;
    const std::size_t first = axis == 0 ? o : o * c;
    double best = av[first];
    std::size_t bi = 0;
    for (std::size_t k = 1; k < len; ++k) {
      const std::size_t idx = axis == 0 ? k * c + o : o * c + k;
      if (av[idx] > best) {
        best = av[idx];
        bi = k;
      }
    }
    y[o] = best;
    arg[o] = bi;
    flat[o] = axis == 0 ? bi * c + o : o * c + bi;
  }
  Var v = a.tape->record("max_axis", std::move(y), {a.id}, [ia = a.id, flat](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    auto& buf = t.grad_buffer(ia);
    for (std::size_t o = 0; o < flat.size(); ++o) buf[flat[o]] += g[o];
  });
  return MaxResult{v, std::move(arg)};
}

Var segment_max_cols(Var a, const std::vector<std::size_t>& offsets) {
  const auto& av = a.value();
  require_rank_le2(av, "segment_max_cols");
  const std::size_t r = nrows(av), c = ncols(av);
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != c) {
    throw DimensionError("segment_max_cols: offsets must start at 0 and end at " + std::to_string(c));
  }
  const std::size_t s = offsets.size() - 1;
  Tensor y({r, s});
  std::vector<std::size_t> flat(r * s);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t k = 0; k < s; ++k) {
      if (offsets[k + 1] <= offsets[k]) throw DimensionError("segment_max_cols: empty segment");
      std::size_t bj = offsets[k];
      for (std::size_t j = offsets[k] + 1; j < offsets[k + 1]; ++j)
        if (av[i * c + j] > av[i * c + bj]) bj = j;
      y[i * s + k] = av[i * c + bj];
      flat[i * s + k] = i * c + bj;
    }
  }
  return a.tape->record("segment_max_cols", std::move(y), {a.id}, [ia = a.id, flat = std::move(flat)](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    auto& buf = t.grad_buffer(ia);
    for (std::size_t o = 0; o < flat.size(); ++o) buf[flat[o]] += g[o];
  });
}

Var gather_rows(Var a, const std::vector<std::size_t>& rows) {
  const auto& av = a.value();
  require_rank_le2(av, "gather_rows");
  const std::size_t r = nrows(av), c = ncols(av);
  Tensor y({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= r) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                           shape_to_string(av.shape()));
    }
    std::copy_n(av.data().data() + rows[i] * c, c, y.data().data() + i * c);
  }
  return a.tape->record("gather_rows", std::move(y), {a.id}, [ia = a.id, rows, c](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    auto& buf = t.grad_buffer(ia);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) buf[rows[i] * c + j] += g[i * c + j];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  if (begin > end || end > nrows(a.value())) throw DimensionError("slice_rows: range out of bounds");
  std::vector<std::size_t> rows(end - begin);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
  return gather_rows(a, rows);
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const auto& av = a.value();
  require_rank_le2(av, "slice_cols");
  const std::size_t r = nrows(av), c = ncols(av);
  if (begin > end || end > c) throw DimensionError("slice_cols: range out of bounds");
  const std::size_t w = end - begin;
  Tensor y({r, w});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) y[i * w + j] = av[i * c + begin + j];
  return a.tape->record("slice_cols", std::move(y), {a.id}, [ia = a.id, r, c, begin, w](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.upstream(self);
    auto& buf = t.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) buf[i * c + begin + j] += g[i * w + j];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t c = ncols(parts.front().value());
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (const auto& p : parts) {
    if (p.tape != &t) throw ContractError("concat_rows: operands live on different tapes");
    if (ncols(p.value()) != c) throw DimensionError("concat_rows: column mismatch");
    total += nrows(p.value());
    ids.push_back(p.id);
  }
  Tensor y({total, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), y.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += p.value().size();
  }
  return t.record("concat_rows", std::move(y), ids, [ids](Tape& t, std::size_t self) {
    const auto& g = t.upstream(self);
    std::size_t off = 0;
    for (auto id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.requires_grad(id)) {
        auto& buf = t.grad_buffer(id);
        for (std::size_t i = 0; i < n; ++i) buf[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t r = nrows(parts.front().value());
  std::size_t total = 0;
  std::vector<std::size_t> ids, widths;
  for (const auto& p : parts) {
    if (p.tape != &t) throw ContractError("concat_cols: operands live on different tapes");
    if (nrows(p.value()) != r) throw DimensionError("concat_cols: row mismatch");
    widths.push_back(ncols(p.value()));
    total += widths.back();
    ids.push_back(p.id);
  }
  Tensor y({r, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j) y[i * total + off + j] = pv[i * widths[k] + j];
    off += widths[k];
  }
  return t.record("concat_cols", std::move(y), ids, [ids, widths, r, total](Tape& t, std::size_t self) {
    const auto& g = t.upstream(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        auto& buf = t.grad_buffer(ids[k]);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) buf[i * widths[k] + j] += g[i * total + off + j];
      }
      off += widths[k];
    }
  });
}

Var stop_gradient(Var a) { return a.tape->constant(a.value()); }

Var cross_entropy(Var logits, std::size_t target) {
  const auto& lv = logits.value();
  if (lv.rank() != 1) throw DimensionError("cross_entropy: expected rank-1 logits");
  if (target >= lv.size()) throw DimensionError("cross_entropy: target out of range");
  const double m = *std::max_element(lv.data().begin(), lv.data().end());
  double z = 0.0;
  for (double v : lv.data()) z += std::exp(v - m);
  const double lse = m + std::log(z);
  return logits.tape->record("cross_entropy", Tensor::scalar(lse - lv[target]), {logits.id},
                             [il = logits.id, target, lse](Tape& t, std::size_t self) {
                               if (!t.requires_grad(il)) return;
                               const double g = t.upstream(self)[0];
                               const auto& lv = t.value(il);
                               auto& buf = t.grad_buffer(il);
                               for (std::size_t i = 0; i < buf.size(); ++i) {
                                 buf[i] += g * (std::exp(lv[i] - lse) - (i == target ? 1.0 : 0.0));
                               }
                             });
}

}  // namespace ad
}  // namespace fastlane
