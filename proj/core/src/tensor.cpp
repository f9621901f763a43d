#include "crt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "crt/errors.hpp"

namespace crt {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() == 2) return shape_[0];
  throw DimensionError("expected a matrix, got shape " + shape_string(shape_));
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() == 2) return shape_[1];
  throw DimensionError("expected a matrix, got shape " + shape_string(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on non-scalar shape " + shape_string(shape_));
  }
  return data_[0];
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

Parameter::Parameter(std::string name_in, Tensor value_in)
    : name(std::move(name_in)),
      value(std::move(value_in)),
      grad(value.shape()),
      first_moment(value.shape()),
      second_moment(value.shape()) {}

void Parameter::zero_grad() { grad.fill(0.0); }

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name " + name);
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  return *params_.back();
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParameterStore::get(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw ConfigError("unknown parameter " + std::string(name));
}

const Parameter& ParameterStore::get(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->get(name);
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Var::grad() const {
  if (const Tensor* g = tape_->grad_if_any(id_)) return *g;
  return Tensor(value().shape());
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

std::uint32_t Tape::push(Node node) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  nodes_.push_back(std::move(node));
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return Var(this, push(std::move(n)));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  return Var(this, push(std::move(n)));
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.borrowed = &p.value;
  n.requires_grad = grad_enabled_;
  n.param = grad_enabled_ ? &p : nullptr;
  auto id = push(std::move(n));
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  if (grad_enabled_) {
    for (const auto& in : inputs) {
      if (&in.tape() != this) throw ContractError("operands recorded on different tapes");
      if (nodes_[in.id()].requires_grad) n.requires_grad = true;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return Var(this, push(std::move(n)));
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape());
  return n.grad;
}

const Tensor* Tape::grad_if_any(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::backward(Var loss) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_string(loss.value().shape()));
  }
  consumed_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id()).fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, value(static_cast<std::uint32_t>(i)), n.grad);
  }
  for (Node& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    auto dst = n.param->grad.data();
    auto src = n.grad.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
}

// ---------------------------------------------------------------------------
// Kernels

namespace {

// c[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

// c[m×n] += a[k×m]ᵀ · b[k×n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

// Adds into the gradient buffer of `in` when it participates in backward.
template <typename F>
void accumulate(Tape& tape, const Var& in, F&& fn) {
  if (!tape.requires_grad(in.id())) return;
  fn(tape.grad_buffer(in.id()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Ops

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(av.shape()) +
                         " and " + shape_string(bv.shape()));
  }
  Tensor out({m, n});
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, a, [&](Tensor& ga) {
      gemm_nt(g.data().data(), b.value().data().data(), ga.data().data(), m, n, k);
    });
    accumulate(t, b, [&](Tensor& gb) {
      gemm_tn(a.value().data().data(), g.data().data(), gb.data().data(), m, k, n);
    });
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  if (bv.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ for " + shape_string(av.shape()) +
                         " and " + shape_string(bv.shape()) + "ᵀ");
  }
  Tensor out({m, n});
  gemm_nt(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, a, [&](Tensor& ga) {
      gemm_nn(g.data().data(), b.value().data().data(), ga.data().data(), m, n, k);
    });
    accumulate(t, b, [&](Tensor& gb) {
      gemm_tn(g.data().data(), a.value().data().data(), gb.data().data(), m, n, k);
    });
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Tensor out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] += bd[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    for (const Var& in : {a, b}) {
      accumulate(t, in, [&](Tensor& gi) {
        auto d = gi.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
      });
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  Tensor out = a.value();
  auto od = out.data();
  auto bd = b.value().data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= bd[i];
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, a, [&](Tensor& ga) {
      const auto& bv = b.value();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    });
    accumulate(t, b, [&](Tensor& gb) {
      const auto& av = a.value();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    });
  });
}

Var add_bias(Var x, Var bias) {
  require_same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bias.value().size() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(xv.shape()));
  }
  Tensor out = xv;
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) += bv[j];
  return x.tape().record(std::move(out), {x, bias}, [x, bias, m, n](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
    accumulate(t, bias, [&](Tensor& gb) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    });
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  return x.tape().record(std::move(out), {x}, [x, factor](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
  });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      const auto& xv = x.value();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0) gx[i] += g[i];
    });
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      const double gv = g[0];
      for (double& v : gx.data()) v += gv;
    });
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [x](Tape& t, const Tensor&, const Tensor& g) {
    accumulate(t, x, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

Var layer_norm(Var x, Var gain, Var bias, double epsilon) {
  require_same_tape(x, gain);
  require_same_tape(x, bias);
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (n < 2) throw DimensionError("layer_norm: row width must be ≥ 2, got " + shape_string(xv.shape()));
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " do not match " + shape_string(xv.shape()));
  }
  auto normalized = std::make_shared<Tensor>(xv.shape());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  Tensor out(xv.shape());
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i) {
    auto row = xv.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + epsilon);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * is;
      (*normalized)(i, j) = h;
      out(i, j) = h * gv[j] + bv[j];
    }
  }
  return x.tape().record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, normalized, inv_std, m, n](Tape& t, const Tensor&, const Tensor& g) {
        const auto& gv = gain.value();
        accumulate(t, x, [&](Tensor& gx) {
          std::vector<double> dh(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dh[j] = g(i, j) * gv[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * (*normalized)(i, j);
            }
            mean_dh /= static_cast<double>(n);
            mean_dh_h /= static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              gx(i, j) += (*inv_std)[i] * (dh[j] - mean_dh - (*normalized)(i, j) * mean_dh_h);
            }
          }
        });
        accumulate(t, gain, [&](Tensor& gg) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g(i, j) * (*normalized)(i, j);
        });
        accumulate(t, bias, [&](Tensor& gb) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g(i, j);
        });
      });
}

namespace {

// Backward of a row softmax restricted to columns [0, width).
void softmax_row_backward(std::span<const double> w, std::span<const double> gw,
                          std::span<double> gx, std::size_t width) {
  double dot = 0.0;
  for (std::size_t j = 0; j < width; ++j) dot += gw[j] * w[j];
  for (std::size_t j = 0; j < width; ++j) gx[j] += w[j] * (gw[j] - dot);
}

}  // namespace


Var softmax_rows(Var x, bool causal) {
  const Tensor& xv = x.value();
  check_finite(xv, "softmax_rows");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t width = causal ? std::min(i + 1, n) : n;
    auto row = xv.row(i);
    auto dst = out.row(i);
    double mx = row[0];
    for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      dst[j] = std::exp(row[j] - mx);
      s += dst[j];
    }
    for (std::size_t j = 0; j < width; ++j) dst[j] /= s;
  }
  return x.tape().record(std::move(out), {x},
                         [x, m, n, causal](Tape& t, const Tensor& y, const Tensor& g) {
                           accumulate(t, x, [&](Tensor& gx) {
                             for (std::size_t i = 0; i < m; ++i) {
                               const std::size_t width = causal ? std::min(i + 1, n) : n;
                               softmax_row_backward(y.row(i), g.row(i), gx.row(i), width);
                             }
                           });
                         });
}

Var geometric_softmax(Var scores, Var geo) {
  require_same_tape(scores, geo);
  const Tensor& av = scores.value();
  const Tensor& gv = geo.value();
  if (av.shape() != gv.shape()) {
    throw DimensionError("geometric_softmax: scores " + shape_string(av.shape()) +
                         " and geometry " + shape_string(gv.shape()) + " differ");
  }
  check_finite(av, "geometric_softmax");
  check_finite(gv, "geometric_softmax");
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out(av.shape());
  // Per row: max over geometry-supported entries and the normalizer, or
  // fallback marker (normalizer 0) when the row has no positive weight.
  auto row_max = std::make_shared<std::vector<double>>(m);
  auto row_norm = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto a = av.row(i);
    auto g = gv.row(i);
    auto w = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (g[j] > 0.0) mx = std::max(mx, a[j]);
    if (std::isinf(mx)) {
      mx = *std::max_element(a.begin(), a.end());
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        w[j] = std::exp(a[j] - mx);
        s += w[j];
      }
      for (std::size_t j = 0; j < n; ++j) w[j] /= s;
      (*row_max)[i] = mx;
      (*row_norm)[i] = 0.0;
      continue;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      w[j] = g[j] > 0.0 ? g[j] * std::exp(a[j] - mx) : 0.0;
      s += w[j];
    }
    for (std::size_t j = 0; j < n; ++j) w[j] /= s;
    (*row_max)[i] = mx;
    (*row_norm)[i] = s;
  }
  return scores.tape().record(
      std::move(out), {scores, geo},
      [scores, geo, row_max, row_norm, m, n](Tape& t, const Tensor& w, const Tensor& gw) {
        std::vector<double> centered(n);
        const Tensor& av = scores.value();
        for (std::size_t i = 0; i < m; ++i) {
          auto wi = w.row(i);
          auto gi = gw.row(i);
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += gi[j] * wi[j];
          for (std::size_t j = 0; j < n; ++j) centered[j] = gi[j] - dot;
          accumulate(t, scores, [&](Tensor& ga) {
            auto dst = ga.row(i);
            for (std::size_t j = 0; j < n; ++j) dst[j] += wi[j] * centered[j];
          });
          const double s = (*row_norm)[i];
          if (s == 0.0) continue;  // fallback row: no dependence on geometry
          accumulate(t, geo, [&](Tensor& gg) {
            auto dst = gg.row(i);
            auto a = av.row(i);
            for (std::size_t j = 0; j < n; ++j) {
              const double e = std::exp(std::min(a[j] - (*row_max)[i], 700.0));
              dst[j] += e / s * centered[j];
            }
          });
        }
      });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") outside " + shape_string(xv.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) = xv(i, begin + j);
  return x.tape().record(std::move(out), {x},
                         [x, begin, w, m](Tape& t, const Tensor&, const Tensor& g) {
                           accumulate(t, x, [&](Tensor& gx) {
                             for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < w; ++j) gx(i, begin + j) += g(i, j);
                           });
                         });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].value().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().rows() != m) {
      throw DimensionError("concat_cols: row counts differ " + shape_string(parts[0].shape()) +
                           " and " + shape_string(p.shape()));
    }
    total += p.value().cols();
  }
  Tensor out({m, total});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, offset + j) = pv(i, j);
    offset += pv.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(std::move(out), inputs,
                                [inputs, m](Tape& t, const Tensor&, const Tensor& g) {
                                  std::size_t offset = 0;
                                  for (const auto& p : inputs) {
                                    const std::size_t w = p.value().cols();
                                    accumulate(t, p, [&](Tensor& gp) {
                                      for (std::size_t i = 0; i < m; ++i)
                                        for (std::size_t j = 0; j < w; ++j)
                                          gp(i, j) += g(i, offset + j);
                                    });
                                    offset += w;
                                  }
                                });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].value().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_same_tape(parts[0], p);
    if (p.value().cols() != n) {
      throw DimensionError("concat_rows: column counts differ " +
                           shape_string(parts[0].shape()) + " and " + shape_string(p.shape()));
    }
    total += p.value().rows();
  }
  std::vector<double> data;
  data.reserve(total * n);
  for (const auto& p : parts) {
    auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return parts[0].tape().record(Tensor({total, n}, std::move(data)), inputs,
                                [inputs](Tape& t, const Tensor&, const Tensor& g) {
                                  std::size_t offset = 0;
                                  for (const auto& p : inputs) {
                                    const std::size_t count = p.value().size();
                                    accumulate(t, p, [&](Tensor& gp) {
                                      for (std::size_t k = 0; k < count; ++k)
                                        gp[k] += g[offset + k];
                                    });
                                    offset += count;
                                  }
                                });
}

Var gather_rows(Var table, std::span<const std::int32_t> ids) {
  const Tensor& tv = table.value();
  const std::size_t rows = tv.rows(), n = tv.cols();
  if (ids.empty()) throw DimensionError("gather_rows: empty index list");
  Tensor out({ids.size(), n});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
      throw DimensionError("gather_rows: index " + std::to_string(ids[i]) + " outside " +
                           shape_string(tv.shape()));
    }
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table},
                             [table, idx, n](Tape& t, const Tensor&, const Tensor& g) {
                               accumulate(t, table, [&](Tensor& gt) {
                                 for (std::size_t i = 0; i < idx.size(); ++i) {
                                   auto dst = gt.row(static_cast<std::size_t>(idx[i]));
                                   for (std::size_t j = 0; j < n; ++j) dst[j] += g(i, j);
                                 }
                               });
                             });
}

Var negative_log_likelihood(Var probs, std::span<const std::int32_t> targets,
                            std::size_t* clamped_count) {
  constexpr double kFloor = 1e-12;
  const Tensor& pv = probs.value();
  const std::size_t m = pv.rows(), n = pv.cols();
  if (targets.size() != m) {
    throw DimensionError("negative_log_likelihood: " + std::to_string(targets.size()) +
                         " targets for " + shape_string(pv.shape()));
  }
  double total = 0.0;
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] < 0) continue;
    if (static_cast<std::size_t>(targets[i]) >= n) {
      throw DimensionError("negative_log_likelihood: target " + std::to_string(targets[i]) +
                           " outside " + shape_string(pv.shape()));
    }
    const double p = pv(i, static_cast<std::size_t>(targets[i]));
    if (p < kFloor) ++clamped;
    total -= std::log(std::max(p, kFloor));
  }
  if (clamped_count) *clamped_count = clamped;
  std::vector<std::int32_t> tg(targets.begin(), targets.end());
  return probs.tape().record(Tensor::scalar(total), {probs},
                             [probs, tg](Tape& t, const Tensor&, const Tensor& g) {
                               accumulate(t, probs, [&](Tensor& gp) {
                                 const Tensor& pv = probs.value();
                                 for (std::size_t i = 0; i < tg.size(); ++i) {
                                   if (tg[i] < 0) continue;
                                   const auto j = static_cast<std::size_t>(tg[i]);
                                   const double p = pv(i, j);
                                   if (p >= kFloor) gp(i, j) -= g[0] / p;
                                 }
                               });
                             });
}

Var linear(Var x, Var weight, Var bias) { return add_bias(matmul(x, weight), bias); }

}  // namespace crt
