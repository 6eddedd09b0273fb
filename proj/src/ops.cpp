#include "lipemo/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lipemo/errors.hpp"
#include "lipemo/kernels.hpp"

namespace lipemo::ops {
namespace {

using detail::make_op;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw InvalidInput(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

// Elementwise unary op; `deriv(x, y)` returns dy/dx given input and output.
template <class F, class D>
Tensor unary(const Tensor& a, F f, D deriv) {
  std::vector<real> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_op(a.shape(), std::move(out), {a}, [deriv](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = parent(self, k);
      if (!p.requires_grad) continue;
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      Node& p = parent(self, k);
      if (!p.requires_grad) continue;
      p.ensure_grad();
      const real sign = k == 0 ? real(1) : real(-1);
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += sign * self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<real> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  const real k = static_cast<real>(s);
  return unary(a, [k](real x) { return k * x; }, [k](real, real) { return k; });
}

Tensor add_scalar(const Tensor& a, double s) {
  const real k = static_cast<real>(s);
  return unary(a, [k](real x) { return x + k; }, [](real, real) { return real(1); });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](real x) { return std::abs(x); },
      [](real x, real) { return x > 0 ? real(1) : (x < 0 ? real(-1) : real(0)); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](real x) { return x > 0 ? x : real(0); },
      [](real x, real) { return x > 0 ? real(1) : real(0); });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  const real s = static_cast<real>(slope);
  return unary(
      a, [s](real x) { return x > 0 ? x : s * x; },
      [s](real x, real) { return x > 0 ? real(1) : s; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](real x) {
        return x >= 0 ? real(1) / (real(1) + std::exp(-x))
                      : std::exp(x) / (real(1) + std::exp(x));
      },
      [](real, real y) { return y * (real(1) - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, [](real x) { return std::tanh(x); }, [](real, real y) { return real(1) - y * y; });
}

Tensor log(const Tensor& a) {
  for (real v : a.values())
    if (!(v > 0)) throw InvalidInput("log: non-positive input");
  return unary(
      a, [](real x) { return std::log(x); }, [](real x, real) { return real(1) / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  const real l = static_cast<real>(lo), h = static_cast<real>(hi);
  return unary(
      a, [l, h](real x) { return std::clamp(x, l, h); },
      [l, h](real x, real) { return (x >= l && x <= h) ? real(1) : real(0); });
}

Tensor sum(const Tensor& a) {
  double acc = 0;
  for (real v : a.values()) acc += v;
  return make_op({1}, {static_cast<real>(acc)}, {a}, [](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw InvalidInput("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_groups(const Tensor& a, int group) {
  if (group <= 0 || a.size() % static_cast<std::size_t>(group) != 0)
    throw InvalidInput("mean_groups: size not divisible by group");
  const std::size_t rows = a.size() / static_cast<std::size_t>(group);
  std::vector<real> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0;
    for (int j = 0; j < group; ++j) acc += a[r * group + j];
    out[r] = static_cast<real>(acc / group);
  }
  return make_op({static_cast<int>(rows)}, std::move(out), {a}, [group](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    const real inv = real(1) / static_cast<real>(group);
    for (std::size_t r = 0; r < self.grad.size(); ++r)
      for (int j = 0; j < group; ++j) p.grad[r * group + j] += self.grad[r] * inv;
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw InvalidInput("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<real> out(a.values().begin(), a.values().end());
  return make_op(std::move(shape), std::move(out), {a}, [](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4 || w.dim(2) != w.dim(3) || x.dim(1) != w.dim(1))
    throw InvalidInput("conv2d: bad shapes x" + shape_str(x.shape()) + " w" +
                       shape_str(w.shape()));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != w.dim(0)))
    throw InvalidInput("conv2d: bias shape");
  kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad};
  if (g.out_h() <= 0 || g.out_w() <= 0) throw InvalidInput("conv2d: empty output");
  std::vector<real> out(static_cast<std::size_t>(g.batch) * g.out_ch * g.out_h() * g.out_w());
  kernels::conv2d_forward(g, x.values().data(), w.values().data(),
                          b.defined() ? b.values().data() : nullptr, out.data());
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  const bool has_bias = b.defined();
  return make_op({g.batch, g.out_ch, g.out_h(), g.out_w()}, std::move(out), std::move(inputs),
                 [g, has_bias](Node& self) {
                   Node& px = parent(self, 0);
                   Node& pw = parent(self, 1);
                   real* dx = nullptr;
                   real* dw = nullptr;
                   real* db = nullptr;
                   if (px.requires_grad) {
                     px.ensure_grad();
                     dx = px.grad.data();
                   }
                   if (pw.requires_grad) {
                     pw.ensure_grad();
                     dw = pw.grad.data();
                   }
                   if (has_bias && parent(self, 2).requires_grad) {
                     Node& pb = parent(self, 2);
                     pb.ensure_grad();
                     db = pb.grad.data();
                   }
                   kernels::conv2d_backward(g, px.value.data(), pw.value.data(), self.grad.data(),
                                            dx, dw, db);
                 });
}

Tensor upsample2x(const Tensor& x) {
  if (x.rank() != 4) throw InvalidInput("upsample2x: need NCHW");
  const int planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<real> out(static_cast<std::size_t>(planes) * 4 * h * w);
  auto xv = x.values();
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        out[(static_cast<std::size_t>(p) * 2 * h + y) * 2 * w + xx] =
            xv[(static_cast<std::size_t>(p) * h + y / 2) * w + xx / 2];
  return make_op({x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out), {x},
                 [planes, h, w](Node& self) {
                   Node& p = parent(self, 0);
                   if (!p.requires_grad) return;
                   p.ensure_grad();
#pragma omp parallel for schedule(static)
                   for (int pl = 0; pl < planes; ++pl)
                     for (int y = 0; y < 2 * h; ++y)
                       for (int xx = 0; xx < 2 * w; ++xx)
                         p.grad[(static_cast<std::size_t>(pl) * h + y / 2) * w + xx / 2] +=
                             self.grad[(static_cast<std::size_t>(pl) * 2 * h + y) * 2 * w + xx];
                 });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw InvalidInput("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s0.size())) throw InvalidInput("concat: bad axis");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(s0[i]);
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= static_cast<std::size_t>(s0[i]);
  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != s0.size()) throw InvalidInput("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (static_cast<int>(i) != axis && s[i] != s0[i])
        throw InvalidInput("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
    out_shape[axis] += s[axis];
    widths.push_back(static_cast<std::size_t>(s[axis]) * inner);
  }
  const std::size_t row = static_cast<std::size_t>(out_shape[axis]) * inner;
  std::vector<real> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].values();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + o * widths[k], widths[k], out.begin() + o * row + offset);
    offset += widths[k];
  }
  return make_op(std::move(out_shape), std::move(out), parts, [widths, outer, row](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Node& p = parent(self, k);
      if (p.requires_grad) {
        p.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t j = 0; j < widths[k]; ++j)
            p.grad[o * widths[k] + j] += self.grad[o * row + off + j];
      }
      off += widths[k];
    }
  });
}

Tensor broadcast_spatial(const Tensor& v, int h, int w) {
  if (v.rank() != 2) throw InvalidInput("broadcast_spatial: need [N, C]");
  const int n = v.dim(0), c = v.dim(1), hw = h * w;
  std::vector<real> out(static_cast<std::size_t>(n) * c * hw);
  for (int i = 0; i < n * c; ++i)
    std::fill_n(out.begin() + static_cast<std::size_t>(i) * hw, hw, v[i]);
  return make_op({n, c, h, w}, std::move(out), {v}, [hw](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      double acc = 0;
      for (int j = 0; j < hw; ++j) acc += self.grad[i * hw + j];
      p.grad[i] += static_cast<real>(acc);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(1))
    throw InvalidInput("linear: bad shapes x" + shape_str(x.shape()) + " w" +
                       shape_str(w.shape()));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != w.dim(0)))
    throw InvalidInput("linear: bias shape");
  const int n = x.dim(0), k = x.dim(1), m = w.dim(0);
  std::vector<real> out(static_cast<std::size_t>(n) * m);
  kernels::linear_forward(n, k, m, x.values().data(), w.values().data(),
                          b.defined() ? b.values().data() : nullptr, out.data());
  std::vector<Tensor> inputs{x, w};
  if (b.defined()) inputs.push_back(b);
  const bool has_bias = b.defined();
  return make_op({n, m}, std::move(out), std::move(inputs), [n, k, m, has_bias](Node& self) {
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    real* dx = nullptr;
    real* dw = nullptr;
    real* db = nullptr;
    if (px.requires_grad) {
      px.ensure_grad();
      dx = px.grad.data();
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      dw = pw.grad.data();
    }
    if (has_bias && parent(self, 2).requires_grad) {
      parent(self, 2).ensure_grad();
      db = parent(self, 2).grad.data();
    }
    kernels::linear_backward(n, k, m, px.value.data(), pw.value.data(), self.grad.data(), dx, dw,
                             db);
  });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw InvalidInput("global_avg_pool: need NCHW");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  return reshape(mean_groups(x, hw), {n, c});
}

Tensor slice(const Tensor& x, int begin, int end) {
  if (x.rank() < 1 || begin < 0 || end > x.dim(0) || begin >= end)
    throw InvalidInput("slice: bad range");
  const std::size_t inner = x.size() / static_cast<std::size_t>(x.dim(0));
  Shape s = x.shape();
  s[0] = end - begin;
  std::vector<real> out(x.values().begin() + begin * inner, x.values().begin() + end * inner);
  const std::size_t off = begin * inner;
  return make_op(std::move(s), std::move(out), {x}, [off](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[off + i] += self.grad[i];
  });
}

Tensor softmax_rows(const Tensor& z) {
  if (z.rank() != 2) throw InvalidInput("softmax_rows: need [N, K]");
  const int n = z.dim(0), k = z.dim(1);
  std::vector<real> out(z.size());
  for (int i = 0; i < n; ++i) {
    const real* row = z.values().data() + i * k;
    const real mx = *std::max_element(row, row + k);
    double total = 0;
    for (int j = 0; j < k; ++j) total += std::exp(static_cast<double>(row[j] - mx));
    for (int j = 0; j < k; ++j)
      out[i * k + j] = static_cast<real>(std::exp(static_cast<double>(row[j] - mx)) / total);
  }
  return make_op(z.shape(), std::move(out), {z}, [n, k](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int i = 0; i < n; ++i) {
      double dot = 0;
      for (int j = 0; j < k; ++j) dot += self.grad[i * k + j] * self.value[i * k + j];
      for (int j = 0; j < k; ++j)
        p.grad[i * k + j] +=
            self.value[i * k + j] * static_cast<real>(self.grad[i * k + j] - dot);
    }
  });
}

Tensor select_col(const Tensor& x, int col) {
  if (x.rank() != 2 || col < 0 || col >= x.dim(1)) throw InvalidInput("select_col: bad column");
  const int n = x.dim(0), k = x.dim(1);
  std::vector<real> out(n);
  for (int i = 0; i < n; ++i) out[i] = x[i * k + col];
  return make_op({n}, std::move(out), {x}, [k, col](Node& self) {
    Node& p = parent(self, 0);
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i * k + col] += self.grad[i];
  });
}

Tensor cosine_rows(const Tensor& v, const Tensor& s, double eps) {
  if (!(eps > 0)) throw InvalidInput("cosine_rows: eps must be positive");
  require_same_shape(v, s, "cosine_rows");
  if (v.rank() != 2) throw InvalidInput("cosine_rows: need [N, D]");
  const int n = v.dim(0), d = v.dim(1);
  struct RowStats {
    double dot, nv, ns, denom;
    bool guarded;
  };
  std::vector<RowStats> stats(n);
  std::vector<real> out(n);
  for (int i = 0; i < n; ++i) {
    double dot = 0, vv = 0, ss = 0;
    for (int j = 0; j < d; ++j) {
      const double a = v[i * d + j], b = s[i * d + j];
      dot += a * b;
      vv += a * a;
      ss += b * b;
    }
    const double nv = std::sqrt(vv), ns = std::sqrt(ss), prod = nv * ns;
    const bool guarded = prod < eps;
    const double denom = guarded ? eps : prod;
    stats[i] = {dot, nv, ns, denom, guarded};
    out[i] = static_cast<real>(dot / denom);
  }
  return make_op({n}, std::move(out), {v, s}, [stats, d](Node& self) {
    Node& pv = parent(self, 0);
    Node& ps = parent(self, 1);
    for (std::size_t i = 0; i < stats.size(); ++i) {
      const auto& st = stats[i];
      const double g = self.grad[i];
      for (int j = 0; j < d; ++j) {
        const double a = pv.value[i * d + j], b = ps.value[i * d + j];
        double da = b / st.denom, db = a / st.denom;
        if (!st.guarded) {
          // d/da of dot/(|a||b|) = b/(|a||b|) - dot*a/(|a|^3|b|)
          da -= st.dot * a / (st.nv * st.nv * st.denom);
          db -= st.dot * b / (st.ns * st.ns * st.denom);
        }
        if (pv.requires_grad) {
          pv.ensure_grad();
          pv.grad[i * d + j] += static_cast<real>(g * da);
        }
        if (ps.requires_grad) {
          ps.ensure_grad();
          ps.grad[i * d + j] += static_cast<real>(g * db);
        }
      }
    }
  });
}

}  // namespace lipemo::ops
