#include "pmp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pmp/random.hpp"

namespace pmp {
PMP_PRECISION_BEGIN

namespace {

using detail::Node;

// Gradient buffer of input `i`, or nullptr when that input is constant.
Real* input_grad(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.ensure_grad().data();
}

const std::vector<Real>& input_value(const Node& self, std::size_t i) {
  return self.inputs[i]->value;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* arg) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) +
                         ", got " + shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// out[n x p] (+)= a[n x m] * b[m x p], row by row so each output row depends
// only on its own input row.
void gemm_rows(const Real* a, const Real* b, Real* out, std::size_t n, std::size_t m,
               std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    Real* o = out + i * p;
    const Real* ar = a + i * m;
    for (std::size_t k = 0; k < m; ++k) {
      const Real s = ar[k];
      const Real* br = b + k * p;
      for (std::size_t j = 0; j < p; ++j) o[j] += s * br[j];
    }
  }
}

// ga[n x m] += g[n x p] * b^T
void gemm_grad_a(const Real* g, const Real* b, Real* ga, std::size_t n, std::size_t m,
                 std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    const Real* gr = g + i * p;
    Real* gar = ga + i * m;
    for (std::size_t k = 0; k < m; ++k) {
      const Real* br = b + k * p;
      Real acc = 0;
      for (std::size_t j = 0; j < p; ++j) acc += gr[j] * br[j];
      gar[k] += acc;
    }
  }
}

// gb[m x p] += a^T * g
void gemm_grad_b(const Real* a, const Real* g, Real* gb, std::size_t n, std::size_t m,
                 std::size_t p) {
  for (std::size_t i = 0; i < n; ++i) {
    const Real* ar = a + i * m;
    const Real* gr = g + i * p;
    for (std::size_t k = 0; k < m; ++k) {
      const Real s = ar[k];
      Real* gbr = gb + k * p;
      for (std::size_t j = 0; j < p; ++j) gbr[j] += s * gr[j];
    }
  }
}

Tensor elementwise_binary(const char* op, const Tensor& a, const Tensor& b, Real sign_b,
                          bool product) {
  require_same_shape(a, b, op);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = product ? av[i] * bv[i] : av[i] + sign_b * bv[i];
  }
  return Tensor::from_op(op, a.shape(), std::move(out), {a, b},
                         [sign_b, product](Node& self) {
                           const auto& g = self.grad;
                           Real* ga = input_grad(self, 0);
                           Real* gb = input_grad(self, 1);
                           const auto& av = input_value(self, 0);
                           const auto& bv = input_value(self, 1);
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             if (product) {
                               if (ga) ga[i] += g[i] * bv[i];
                               if (gb) gb[i] += g[i] * av[i];
                             } else {
                               if (ga) ga[i] += g[i];
                               if (gb) gb[i] += sign_b * g[i];
                             }
                           }
                         });
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear", "x");
  require_rank(w, 2, "linear", "W");
  require_rank(b, 1, "linear", "b");
  if (x.dim(1) != w.dim(0) || b.dim(0) != w.dim(1)) {
    throw DimensionError("linear: x " + shape_string(x.shape()) + " incompatible with W " +
                         shape_string(w.shape()) + " and b " + shape_string(b.shape()));
  }
  const std::size_t n = x.dim(0), m = x.dim(1), p = w.dim(1);
  std::vector<Real> out(n * p);
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * p);
  gemm_rows(x.values().data(), w.values().data(), out.data(), n, m, p);
  return Tensor::from_op("linear", {n, p}, std::move(out), {x, w, b}, [n, m, p](Node& self) {
    const Real* g = self.grad.data();
    if (Real* gx = input_grad(self, 0)) gemm_grad_a(g, input_value(self, 1).data(), gx, n, m, p);
    if (Real* gw = input_grad(self, 1)) gemm_grad_b(input_value(self, 0).data(), g, gw, n, m, p);
    if (Real* gb = input_grad(self, 2)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) gb[j] += g[i * p + j];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul", "a");
  require_rank(b, 2, "matmul", "b");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), m = a.dim(1), p = b.dim(1);
  std::vector<Real> out(n * p, Real(0));
  gemm_rows(a.values().data(), b.values().data(), out.data(), n, m, p);
  return Tensor::from_op("matmul", {n, p}, std::move(out), {a, b}, [n, m, p](Node& self) {
    const Real* g = self.grad.data();
    if (Real* ga = input_grad(self, 0)) gemm_grad_a(g, input_value(self, 1).data(), ga, n, m, p);
    if (Real* gb = input_grad(self, 1)) gemm_grad_b(input_value(self, 0).data(), g, gb, n, m, p);
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary("add", a, b, 1, false); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary("sub", a, b, -1, false); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary("mul", a, b, 0, true); }

Tensor scale(const Tensor& x, Real factor) {
  std::vector<Real> out(x.values().begin(), x.values().end());
  for (Real& v : out) v *= factor;
  return Tensor::from_op("scale", x.shape(), std::move(out), {x}, [factor](Node& self) {
    Real* gx = input_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += factor * self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (Real v : x.values()) acc += v;
  return Tensor::from_op("sum", {}, {static_cast<Real>(acc)}, {x}, [](Node& self) {
    Real* gx = input_grad(self, 0);
    const std::size_t n = self.inputs[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), Real(1) / static_cast<Real>(x.numel())); }

Tensor pick(const Tensor& x, std::size_t index) {
  if (index >= x.numel()) {
    throw IndexError("pick: index " + std::to_string(index) + " out of range for " +
                     shape_string(x.shape()));
  }
  return Tensor::from_op("pick", {}, {x.values()[index]}, {x}, [index](Node& self) {
    input_grad(self, 0)[index] += self.grad[0];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                         shape_string(shape));
  }
  std::vector<Real> out(x.values().begin(), x.values().end());
  return Tensor::from_op("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
    Real* gx = input_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  require_rank(x, 2, "layer_norm", "x");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: gamma " + shape_string(gamma.shape()) + " / beta " +
                         shape_string(beta.shape()) + " do not match width " + std::to_string(d));
  }
  if (!(eps >= 0)) throw ParameterError("layer_norm: eps must be non-negative");
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  std::vector<Real> xhat(n * d), rstd(n), out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const Real* row = xv.data() + i * d;
    double mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double r = 1.0 / std::sqrt(var + static_cast<double>(eps));
    rstd[i] = static_cast<Real>(r);
    for (std::size_t j = 0; j < d; ++j) {
      const Real h = static_cast<Real>((row[j] - mu) * r);
      xhat[i * d + j] = h;
      out[i * d + j] = h * gv[j] + bv[j];
    }
  }
  return Tensor::from_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [n, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const Real* g = self.grad.data();
        const auto& gv = input_value(self, 1);
        Real* gx = input_grad(self, 0);
        Real* gg = input_grad(self, 1);
        Real* gb = input_grad(self, 2);
        for (std::size_t i = 0; i < n; ++i) {
          const Real* gr = g + i * d;
          const Real* h = xhat.data() + i * d;
          if (gg)
            for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * h[j];
          if (gb)
            for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
          if (!gx) continue;
          double mean_dh = 0, mean_dh_h = 0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = static_cast<double>(gr[j]) * gv[j];
            mean_dh += dh;
            mean_dh_h += dh * h[j];
          }
          mean_dh /= static_cast<double>(d);
          mean_dh_h /= static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dh = static_cast<double>(gr[j]) * gv[j];
            gx[i * d + j] += static_cast<Real>(rstd[i] * (dh - mean_dh - h[j] * mean_dh_h));
          }
        }
      });
}

Tensor leaky_relu(const Tensor& x, Real slope) {
  if (!(slope >= 0 && slope < 1)) {
    throw ParameterError("leaky_relu: slope must lie in [0, 1), got " + std::to_string(slope));
  }
  std::vector<Real> out(x.values().begin(), x.values().end());
  for (Real& v : out) v = v >= 0 ? v : slope * v;
  return Tensor::from_op("leaky_relu", x.shape(), std::move(out), {x}, [slope](Node& self) {
    Real* gx = input_grad(self, 0);
    const auto& xv = input_value(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i)
      gx[i] += xv[i] >= 0 ? self.grad[i] : slope * self.grad[i];
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  const auto xv = x.values();
  std::vector<Real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    out[i] = static_cast<Real>(0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))));
  }
  return Tensor::from_op("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
    Real* gx = input_grad(self, 0);
    const auto& xv = input_value(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double t = std::tanh(kC * (v + kA * v * v * v));
      const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      gx[i] += static_cast<Real>(self.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt));
    }
  });
}

Tensor dropout(const Tensor& x, Real rate, bool training, std::uint64_t seed) {
  if (!(rate >= 0 && rate < 1)) {
    throw ParameterError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0) return x;
  const Real keep_scale = Real(1) / (Real(1) - rate);
  const auto xv = x.values();
  std::vector<Real> mask(xv.size()), out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    mask[i] = counter_uniform(seed, i) >= static_cast<double>(rate) ? keep_scale : Real(0);
    out[i] = xv[i] * mask[i];
  }
  return Tensor::from_op("dropout", x.shape(), std::move(out), {x},
                         [mask = std::move(mask)](Node& self) {
                           Real* gx = input_grad(self, 0);
                           for (std::size_t i = 0; i < mask.size(); ++i)
                             gx[i] += self.grad[i] * mask[i];
                         });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw DimensionError("softmax: scalar input");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  std::vector<Real> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xv.data() + r * d;
    const Real m = *std::max_element(row, row + d);
    double z = 0;
    for (std::size_t j = 0; j < d; ++j) z += std::exp(static_cast<double>(row[j] - m));
    for (std::size_t j = 0; j < d; ++j)
      out[r * d + j] = static_cast<Real>(std::exp(static_cast<double>(row[j] - m)) / z);
  }
  std::vector<Real> probs = out;
  return Tensor::from_op("softmax", x.shape(), std::move(out), {x},
                         [rows, d, probs = std::move(probs)](Node& self) {
                           Real* gx = input_grad(self, 0);
                           for (std::size_t r = 0; r < rows; ++r) {
                             const Real* p = probs.data() + r * d;
                             const Real* g = self.grad.data() + r * d;
                             double dot = 0;
                             for (std::size_t j = 0; j < d; ++j) dot += g[j] * p[j];
                             for (std::size_t j = 0; j < d; ++j)
                               gx[r * d + j] += static_cast<Real>(p[j] * (g[j] - dot));
                           }
                         });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target) {
  const std::size_t c = logits.numel();
  if (logits.rank() == 0 || logits.shape().back() != c) {
    throw DimensionError("softmax_cross_entropy: expected a single logit vector, got " +
                         shape_string(logits.shape()));
  }
  if (target >= c) {
    throw IndexError("softmax_cross_entropy: target " + std::to_string(target) +
                     " out of range for " + std::to_string(c) + " classes");
  }
  const auto lv = logits.values();
  const double m = *std::max_element(lv.begin(), lv.end());
  double z = 0;
  for (Real v : lv) z += std::exp(v - m);
  const double lse = m + std::log(z);
  const double loss = lse - lv[target];
  std::vector<Real> probs(c);
  for (std::size_t j = 0; j < c; ++j) probs[j] = static_cast<Real>(std::exp(lv[j] - lse));
  return Tensor::from_op("softmax_cross_entropy", {}, {static_cast<Real>(std::max(loss, 0.0))},
                         {logits}, [target, probs = std::move(probs)](Node& self) {
                           Real* gl = input_grad(self, 0);
                           const Real g = self.grad[0];
                           for (std::size_t j = 0; j < probs.size(); ++j)
                             gl[j] += g * (probs[j] - (j == target ? Real(1) : Real(0)));
                         });
}

MaxResult max_over_groups(const Tensor& x) {
  require_rank(x, 3, "max_over_groups", "x");
  const std::size_t n = x.dim(0), k = x.dim(1), d = x.dim(2);
  const auto xv = x.values();
  std::vector<Real> out(n * d);
  std::vector<std::size_t> arg(n * d, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Real* base = xv.data() + i * k * d;
    Real* o = out.data() + i * d;
    std::size_t* a = arg.data() + i * d;
    std::copy(base, base + d, o);
    for (std::size_t r = 1; r < k; ++r) {
      const Real* row = base + r * d;
      for (std::size_t j = 0; j < d; ++j) {
        if (row[j] > o[j]) {
          o[j] = row[j];
          a[j] = r;
        }
      }
    }
  }
  MaxResult result;
  result.argmax = arg;
  result.values = Tensor::from_op("max_over_groups", {n, d}, std::move(out), {x},
                                  [n, k, d, arg = std::move(arg)](Node& self) {
                                    Real* gx = input_grad(self, 0);
                                    for (std::size_t i = 0; i < n; ++i)
                                      for (std::size_t j = 0; j < d; ++j)
                                        gx[(i * k + arg[i * d + j]) * d + j] +=
                                            self.grad[i * d + j];
                                  });
  return result;
}

MaxResult max_over_first_axis(const Tensor& x) {
  require_rank(x, 2, "max_over_first_axis", "x");
  MaxResult grouped = max_over_groups(reshape(x, {1, x.dim(0), x.dim(1)}));
  grouped.values = reshape(grouped.values, {x.dim(1)});
  return grouped;
}

Tensor mean_pool(const Tensor& x) {
  require_rank(x, 2, "mean_pool", "x");
  const std::size_t n = x.dim(0), d = x.dim(1);
  const auto xv = x.values();
  std::vector<double> acc(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) acc[j] += xv[i * d + j];
  std::vector<Real> out(d);
  for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<Real>(acc[j] / static_cast<double>(n));
  return Tensor::from_op("mean_pool", {1, d}, std::move(out), {x}, [n, d](Node& self) {
    Real* gx = input_grad(self, 0);
    const Real inv = Real(1) / static_cast<Real>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += self.grad[j] * inv;
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows", "x");
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (rows.empty()) throw DimensionError("gather_rows: empty row list");
  const auto xv = x.values();
  std::vector<Real> out(rows.size() * d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) {
      throw IndexError("gather_rows: row " + std::to_string(rows[r]) + " out of range for " +
                       shape_string(x.shape()));
    }
    std::copy_n(xv.data() + rows[r] * d, d, out.data() + r * d);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return Tensor::from_op("gather_rows", {rows.size(), d}, std::move(out), {x},
                         [d, idx = std::move(idx)](Node& self) {
                           Real* gx = input_grad(self, 0);
                           for (std::size_t r = 0; r < idx.size(); ++r) {
                             const Real* g = self.grad.data() + r * d;
                             Real* dst = gx + idx[r] * d;
                             for (std::size_t j = 0; j < d; ++j) dst[j] += g[j];
                           }
                         });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols", "a");
  require_rank(b, 2, "concat_cols", "b");
  if (a.dim(0) != b.dim(0)) {
    throw DimensionError("concat_cols: row counts differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1), d = da + db;
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<Real> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * da, da, out.data() + i * d);
    std::copy_n(bv.data() + i * db, db, out.data() + i * d + da);
  }
  return Tensor::from_op("concat_cols", {n, d}, std::move(out), {a, b}, [n, da, db](Node& self) {
    const std::size_t d = da + db;
    Real* ga = input_grad(self, 0);
    Real* gb = input_grad(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const Real* g = self.grad.data() + i * d;
      if (ga)
        for (std::size_t j = 0; j < da; ++j) ga[i * da + j] += g[j];
      if (gb)
        for (std::size_t j = 0; j < db; ++j) gb[i * db + j] += g[da + j];
    }
  });
}

AttentionResult grouped_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                  std::size_t group_size, std::size_t heads) {
  require_rank(q, 2, "grouped_attention", "q");
  require_same_shape(q, k, "grouped_attention");
  require_same_shape(q, v, "grouped_attention");
  const std::size_t n = q.dim(0), d = q.dim(1);
  if (group_size == 0 || n % group_size != 0) {
    throw ConfigError("grouped_attention: group size " + std::to_string(group_size) +
                      " does not divide " + std::to_string(n) + " rows");
  }
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("grouped_attention: " + std::to_string(heads) + " heads do not divide width " +
                      std::to_string(d));
  }
  const std::size_t groups = n / group_size, hd = d / heads, g = group_size;
  const Real inv_sqrt = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(hd)));
  const auto qv = q.values();
  const auto kv = k.values();
  const auto vv = v.values();
  std::vector<Real> probs(groups * heads * g * g);
  std::vector<Real> out(n * d, Real(0));
  std::vector<double> row(g);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    const std::size_t r0 = grp * g;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * hd;
      Real* p = probs.data() + (grp * heads + h) * g * g;
      for (std::size_t a = 0; a < g; ++a) {
        const Real* qa = qv.data() + (r0 + a) * d + c0;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < g; ++b) {
          const Real* kb = kv.data() + (r0 + b) * d + c0;
          Real s = 0;
          for (std::size_t c = 0; c < hd; ++c) s += qa[c] * kb[c];
          row[b] = static_cast<double>(s * inv_sqrt);
          m = std::max(m, row[b]);
        }
        double z = 0;
        for (std::size_t b = 0; b < g; ++b) {
          row[b] = std::exp(row[b] - m);
          z += row[b];
        }
        Real* o = out.data() + (r0 + a) * d + c0;
        for (std::size_t b = 0; b < g; ++b) {
          const Real w = static_cast<Real>(row[b] / z);
          p[a * g + b] = w;
          const Real* vb = vv.data() + (r0 + b) * d + c0;
          for (std::size_t c = 0; c < hd; ++c) o[c] += w * vb[c];
        }
      }
    }
  }
  AttentionResult result;
  result.weights = probs;
  result.out = Tensor::from_op(
      "grouped_attention", {n, d}, std::move(out), {q, k, v},
      [groups, heads, g, d, hd, inv_sqrt, probs = std::move(probs)](Node& self) {
        const auto& qv = input_value(self, 0);
        const auto& kv = input_value(self, 1);
        const auto& vv = input_value(self, 2);
        Real* gq = input_grad(self, 0);
        Real* gk = input_grad(self, 1);
        Real* gv = input_grad(self, 2);
        const Real* go = self.grad.data();
        std::vector<Real> dp(g), ds(g);
        for (std::size_t grp = 0; grp < groups; ++grp) {
          const std::size_t r0 = grp * g;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * hd;
            const Real* p = probs.data() + (grp * heads + h) * g * g;
            for (std::size_t a = 0; a < g; ++a) {
              const Real* goa = go + (r0 + a) * d + c0;
              // dP[a,b] = dO[a] . V[b]; dV[b] += P[a,b] dO[a]
              double dot = 0;
              for (std::size_t b = 0; b < g; ++b) {
                const Real* vb = vv.data() + (r0 + b) * d + c0;
                Real s = 0;
                for (std::size_t c = 0; c < hd; ++c) s += goa[c] * vb[c];
                dp[b] = s;
                dot += static_cast<double>(s) * p[a * g + b];
                if (gv) {
                  Real* gvb = gv + (r0 + b) * d + c0;
                  const Real w = p[a * g + b];
                  for (std::size_t c = 0; c < hd; ++c) gvb[c] += w * goa[c];
                }
              }
              for (std::size_t b = 0; b < g; ++b)
                ds[b] = static_cast<Real>(p[a * g + b] * (dp[b] - dot)) * inv_sqrt;
              const Real* qa = qv.data() + (r0 + a) * d + c0;
              for (std::size_t b = 0; b < g; ++b) {
                const Real* kb = kv.data() + (r0 + b) * d + c0;
                if (gq) {
                  Real* gqa = gq + (r0 + a) * d + c0;
                  for (std::size_t c = 0; c < hd; ++c) gqa[c] += ds[b] * kb[c];
                }
                if (gk) {
                  Real* gkb = gk + (r0 + b) * d + c0;
                  for (std::size_t c = 0; c < hd; ++c) gkb[c] += ds[b] * qa[c];
                }
              }
            }
          }
        }
      });
  return result;
}

PMP_PRECISION_END
}  // namespace pmp
