#include "lipemo/losses.hpp"

#include <algorithm>
#include <cmath>

#include "lipemo/errors.hpp"
#include "lipemo/ops.hpp"

namespace lipemo {

void LossWeights::validate() const {
  for (double w : {s_r, s_w, s_g, s_e})
    if (!std::isfinite(w) || w < 0) throw ConfigError("loss weights must be finite and >= 0");
}

bool LossBreakdown::finite() const {
  for (double v : {L_r, E_s, L_g, L_d, L_e, L_total})
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor l1_reconstruction(const Tensor& generated, const Tensor& target, int windows) {
  if (generated.shape() != target.shape())
    throw InvalidInput("l1: shapes " + shape_str(generated.shape()) + " vs " +
                       shape_str(target.shape()));
  if (windows < 1) throw InvalidInput("l1: need at least one window");
  return ops::scale(ops::sum(ops::abs(ops::sub(generated, target))), 1.0 / windows);
}

Tensor sync_prob(const Tensor& v, const Tensor& s, double eps, double p_floor) {
  if (!(eps > 0)) throw InvalidInput("sync_prob: eps must be > 0");
  return ops::clamp(ops::cosine_rows(v, s, eps), p_floor, 1.0);
}

double sync_prob(const std::vector<double>& v, const std::vector<double>& s, double eps,
                 double p_floor) {
  if (!(eps > 0)) throw InvalidInput("sync_prob: eps must be > 0");
  if (v.size() != s.size()) throw InvalidInput("sync_prob: embedding sizes differ");
  double dot = 0, nv = 0, ns = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += v[i] * s[i];
    nv += v[i] * v[i];
    ns += s[i] * s[i];
  }
  const double p = dot / std::max(std::sqrt(nv) * std::sqrt(ns), eps);
  return std::clamp(p, p_floor, 1.0);
}

Tensor sync_loss(const Tensor& probs) {
  for (real p : probs.values())
    if (!(p > 0 && p <= 1)) throw InvalidInput("sync_loss: probabilities must be in (0, 1]");
  return ops::scale(ops::mean(ops::log(probs)), -1.0);
}

GanLosses gan_losses(const Tensor& d_real, const Tensor& d_fake, double p_floor) {
  for (const Tensor* t : {&d_real, &d_fake})
    for (real p : t->values())
      if (!(p >= 0 && p <= 1)) throw InvalidInput("gan_losses: score outside [0, 1]");
  const double hi = 1.0 - p_floor;
  Tensor fake = ops::clamp(d_fake, p_floor, hi);
  Tensor real_s = ops::clamp(d_real, p_floor, hi);
  Tensor lg = ops::mean(ops::log(ops::add_scalar(ops::scale(fake, -1.0), 1.0)));
  Tensor ld = ops::add(ops::mean(ops::log(real_s)), lg);
  return {lg, ld};
}

Tensor emotion_softmax(const Tensor& logits) { return ops::softmax_rows(logits); }

std::array<double, 3> emotion_softmax(const std::array<double, 3>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::array<double, 3> g{};
  double total = 0;
  for (int k = 0; k < 3; ++k) total += g[k] = std::exp(z[k] - m);
  for (double& v : g) v /= total;
  return g;
}

Tensor emotion_loss(const Tensor& probs, int desired) {
  if (probs.rank() != 2 || desired < 0 || desired >= probs.dim(1))
    throw InvalidInput("emotion_loss: invalid desired class");
  return ops::add_scalar(ops::scale(ops::mean(ops::select_col(probs, desired)), -1.0), 1.0);
}

double total_loss(const LossBreakdown& b, const LossWeights& w) {
  return w.s_r * b.L_r + w.s_w * b.E_s + w.s_g * b.L_g + w.s_e * b.L_e;
}

double clamp_grad_norm(std::vector<double>& grads, double lo, double hi) {
  if (!(lo > 0 && hi > lo)) throw InvalidInput("clamp_grad_norm: need 0 < lo < hi");
  double sq = 0;
  for (double g : grads) sq += g * g;
  const double n = std::sqrt(sq);
  if (n == 0) return 0;
  const double f = n < lo ? lo / n : (n > hi ? hi / n : 1.0);
  if (f != 1.0)
    for (double& g : grads) g *= f;
  return n;
}

double clamp_grad_norm(ParameterList& params, double lo, double hi) {
  if (!(lo > 0 && hi > lo)) throw InvalidInput("clamp_grad_norm: need 0 < lo < hi");
  double sq = 0;
  for (const auto& p : params.items())
    for (real g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  const double n = std::sqrt(sq);
  if (n == 0) return 0;
  const double f = n < lo ? lo / n : (n > hi ? hi / n : 1.0);
  if (f != 1.0)
    for (auto& p : params.items())
      if (!p.tensor.grad().empty())
        for (real& g : p.tensor.grad_mut()) g = static_cast<real>(g * f);
  return n;
}

}  // namespace lipemo
