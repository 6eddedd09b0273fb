#pragma once

#include <array>
#include <utility>
#include <vector>

#include "lipemo/nn.hpp"
#include "lipemo/tensor.hpp"

namespace lipemo {

inline constexpr double kProbFloor = 1e-7;
inline constexpr double kCosineEps = 1e-8;

struct LossWeights {
  double s_r = 0.8;
  double s_w = 0.03;
  double s_g = 0.07;
  double s_e = 0.1;
  void validate() const;
};

struct LossBreakdown {
  double L_r = 0;
  double E_s = 0;
  double L_g = 0;
  double L_d = 0;
  double L_e = 0;
  double L_total = 0;
  bool finite() const;
};

// Sum of absolute differences per window, averaged over windows.
// generated/target [N*T, C, H, W] holding `windows` windows.
Tensor l1_reconstruction(const Tensor& generated, const Tensor& target, int windows);

// Clamped cosine per row: clamp(v.s / max(|v||s|, eps), p_floor, 1). v, s [N, D] -> [N].
Tensor sync_prob(const Tensor& v, const Tensor& s, double eps = kCosineEps,
                 double p_floor = kProbFloor);
double sync_prob(const std::vector<double>& v, const std::vector<double>& s,
                 double eps = kCosineEps, double p_floor = kProbFloor);

// Mean of -log P; every P must be in (0, 1].
Tensor sync_loss(const Tensor& probs);

struct GanLosses {
  Tensor L_g;  // mean log(1 - D(fake))
  Tensor L_d;  // mean log D(real) + L_g
};

// Scores must lie in [0, 1]; saturated values are clamped to
// [p_floor, 1 - p_floor] before the logs.
GanLosses gan_losses(const Tensor& d_real, const Tensor& d_fake, double p_floor = kProbFloor);

Tensor emotion_softmax(const Tensor& logits);
std::array<double, 3> emotion_softmax(const std::array<double, 3>& z);

// Mean of (1 - g_d) over rows of probs [N, K].
Tensor emotion_loss(const Tensor& probs, int desired);

double total_loss(const LossBreakdown& b, const LossWeights& w);

// Rescales all gradients of `params` so their global L2 norm lies in [lo, hi].
// A zero gradient is left unchanged. Returns the norm before clamping.
double clamp_grad_norm(ParameterList& params, double lo, double hi);
double clamp_grad_norm(std::vector<double>& grads, double lo, double hi);

}  // namespace lipemo
