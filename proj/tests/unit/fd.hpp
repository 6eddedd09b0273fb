#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lipemo/tensor.hpp"

namespace lipemo::testing {

inline Tensor random_tensor(Shape shape, unsigned seed, double lo = -1.0, double hi = 1.0) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<real> v(n);
  for (auto& x : v) x = static_cast<real>(u(rng));
  return Tensor(std::move(shape), std::move(v));
}

struct FdResult {
  double max_rel = 0;
  double max_abs = 0;
  int checked = 0;
};

// Central-difference check of d f / d x for every element of `x` (or the first
// `limit` elements). `f` must return a one-element tensor.
inline FdResult fd_check(Tensor& x, const std::function<Tensor()>& f, double h = 1e-6,
                         std::size_t limit = 64) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor y = f();
  y.backward();
  const std::vector<real> analytic(x.grad().begin(), x.grad().end());
  FdResult r;
  NoGradGuard guard;
  const std::size_t n = std::min(limit, x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const real saved = x.values()[i];
    x.values()[i] = saved + h;
    const double fp = f().item();
    x.values()[i] = saved - h;
    const double fm = f().item();
    x.values()[i] = saved;
    const double numeric = (fp - fm) / (2 * h);
    const double err = std::abs(numeric - analytic[i]);
    const double scale = std::max({std::abs(numeric), std::abs(static_cast<double>(analytic[i])), 1e-3});
    r.max_abs = std::max(r.max_abs, err);
    r.max_rel = std::max(r.max_rel, err / scale);
    ++r.checked;
  }
  return r;
}

}  // namespace lipemo::testing
