#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fd.hpp"
#include "lipemo/errors.hpp"
#include "lipemo/losses.hpp"
#include "lipemo/ops.hpp"

using namespace lipemo;
using lipemo::testing::fd_check;
using lipemo::testing::random_tensor;

namespace {

Tensor vec(std::vector<real> v) {
  const int n = static_cast<int>(v.size());
  return Tensor({n}, std::move(v));
}

Tensor rows(int n, int d, std::vector<real> v) { return Tensor({n, d}, std::move(v)); }

}  // namespace

TEST_CASE("l1 reconstruction closed forms") {
  Tensor a({1, 1, 1, 1}, std::vector<real>{0.25});
  Tensor b({1, 1, 1, 1}, std::vector<real>{0.75});
  CHECK(l1_reconstruction(a, b, 1).item() == doctest::Approx(0.5).epsilon(1e-12));
  Tensor x = random_tensor({4, 3, 5, 5}, 1, 0, 1);
  CHECK(l1_reconstruction(x, x, 2).item() == 0.0);
}

TEST_CASE("l1 reconstruction matches a loop over windows") {
  const int windows = 3, per = 5 * 3 * 4 * 4;
  Tensor g = random_tensor({windows * 5, 3, 4, 4}, 2, 0, 1);
  Tensor t = random_tensor({windows * 5, 3, 4, 4}, 3, 0, 1);
  double total = 0;
  for (int w = 0; w < windows; ++w) {
    double s = 0;
    for (int i = 0; i < per; ++i) s += std::abs(g[w * per + i] - t[w * per + i]);
    total += s;
  }
  CHECK(l1_reconstruction(g, t, windows).item() == doctest::Approx(total / windows).epsilon(1e-9));
  CHECK_THROWS_AS(l1_reconstruction(g, random_tensor({1, 3, 4, 4}, 4), 1), InvalidInput);
}

TEST_CASE("sync probability") {
  SUBCASE("identical unit vectors give one") {
    CHECK(sync_prob(std::vector<double>{0.6, 0.8}, std::vector<double>{0.6, 0.8}) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("orthogonal vectors hit the floor") {
    CHECK(sync_prob(std::vector<double>{1, 0}, std::vector<double>{0, 1}, kCosineEps, 0.0) == 0.0);
    CHECK(sync_prob(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == kProbFloor);
  }
  SUBCASE("zero audio vector uses the eps denominator") {
    const double p = sync_prob(std::vector<double>{1, 0}, std::vector<double>{0, 0}, 1e-8, 0.0);
    CHECK(std::isfinite(p));
    CHECK(p == 0.0);
    Tensor t = sync_prob(rows(1, 2, {1, 0}), rows(1, 2, {0, 0}), 1e-8, 0.0);
    CHECK(std::isfinite(t.item()));
  }
  SUBCASE("eps must be positive") {
    CHECK_THROWS_AS(sync_prob(std::vector<double>{1}, std::vector<double>{1}, 0.0), InvalidInput);
    CHECK_THROWS_AS(sync_prob(rows(1, 1, {1}), rows(1, 1, {1}), -1.0), InvalidInput);
  }
  SUBCASE("tensor and scalar forms agree") {
    Tensor v = random_tensor({4, 6}, 5), s = random_tensor({4, 6}, 6);
    Tensor p = sync_prob(v, s);
    for (int i = 0; i < 4; ++i) {
      std::vector<double> vi(v.values().begin() + i * 6, v.values().begin() + i * 6 + 6);
      std::vector<double> si(s.values().begin() + i * 6, s.values().begin() + i * 6 + 6);
      CHECK(p[i] == doctest::Approx(sync_prob(vi, si)).epsilon(1e-12));
    }
  }
}

TEST_CASE("sync loss closed forms") {
  CHECK(sync_loss(vec({1, 1, 1})).item() == 0.0);
  CHECK(sync_loss(vec({std::exp(-1.0)})).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sync_loss(vec({1, std::exp(-2.0)})).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(sync_loss(vec({0.5, 0.0})), InvalidInput);
  CHECK_THROWS_AS(sync_loss(vec({1.5})), InvalidInput);
}

TEST_CASE("gan losses closed forms") {
  const GanLosses a = gan_losses(vec({0.5}), vec({0.5}));
  CHECK(a.L_g.item() == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(a.L_d.item() == doctest::Approx(2 * std::log(0.5)).epsilon(1e-12));
  // Perfect discriminator: both logs saturate at the clamp.
  const GanLosses p = gan_losses(vec({1.0}), vec({0.0}));
  CHECK(p.L_d.item() == doctest::Approx(2 * std::log1p(-kProbFloor)).epsilon(1e-9));
  CHECK(std::isfinite(gan_losses(vec({0.0}), vec({1.0})).L_d.item()));
  CHECK_THROWS_AS(gan_losses(vec({1.2}), vec({0.5})), InvalidInput);
  CHECK_THROWS_AS(gan_losses(vec({0.5}), vec({-0.1})), InvalidInput);
}

TEST_CASE("emotion softmax") {
  const auto u = emotion_softmax(std::array<double, 3>{0, 0, 0});
  for (double g : u) CHECK(g == doctest::Approx(1.0 / 3).epsilon(1e-12));
  const auto h = emotion_softmax(std::array<double, 3>{1, 0, 0});
  CHECK(h[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 2)).epsilon(1e-12));
  const auto s1 = emotion_softmax(std::array<double, 3>{0.3, -1.2, 2.0});
  const auto s2 = emotion_softmax(std::array<double, 3>{100.3, 98.8, 102.0});
  for (int k = 0; k < 3; ++k) CHECK(std::abs(s1[k] - s2[k]) < 1e-9);
  Tensor z = rows(2, 3, {0.3, -1.2, 2.0, 1000, 0, -1000});
  Tensor g = emotion_softmax(z);
  for (int k = 0; k < 3; ++k) CHECK(g[k] == doctest::Approx(s1[k]).epsilon(1e-12));
  CHECK(g[3] == doctest::Approx(1.0));
  CHECK(std::isfinite(g[5]));
}

TEST_CASE("emotion loss closed forms") {
  CHECK(emotion_loss(rows(2, 3, {1, 0, 0, 1, 0, 0}), 0).item() == 0.0);
  CHECK(emotion_loss(rows(1, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3}), 1).item() ==
        doctest::Approx(2.0 / 3).epsilon(1e-12));
  CHECK(emotion_loss(rows(2, 3, {0, 0, 1, 0, 1, 0}), 2).item() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(emotion_loss(rows(1, 3, {1, 0, 0}), 3), InvalidInput);
  CHECK_THROWS_AS(emotion_loss(rows(1, 3, {1, 0, 0}), -1), InvalidInput);
}

TEST_CASE("emotion loss stays in [0, 1] for random probabilities") {
  for (unsigned seed = 0; seed < 200; ++seed) {
    Tensor p = emotion_softmax(random_tensor({5, 3}, seed, -20, 20));
    const double l = emotion_loss(p, static_cast<int>(seed % 3)).item();
    CHECK(l >= 0.0);
    CHECK(l <= 1.0);
  }
}

TEST_CASE("total loss") {
  LossWeights w;
  CHECK(w.s_r + w.s_w + w.s_g + w.s_e == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(total_loss(LossBreakdown{}, w) == 0.0);
  CHECK(total_loss(LossBreakdown{1, 0, 0, 0, 0, 0}, w) == doctest::Approx(0.8).epsilon(1e-15));
  const LossWeights emo{0.6, 0.03, 0.07, 0.3};
  CHECK(total_loss(LossBreakdown{0, 0, 0, 0, 1, 0}, emo) == doctest::Approx(0.3).epsilon(1e-15));
  // L_d is not part of the generator objective.
  CHECK(total_loss(LossBreakdown{0, 0, 0, 5, 0, 0}, w) == 0.0);
  CHECK_THROWS_AS((LossWeights{-0.1, 0, 0, 0}.validate()), ConfigError);
}

TEST_CASE("total loss is linear in each component") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3, 3);
  const LossWeights w;
  for (int i = 0; i < 100; ++i) {
    LossBreakdown b{u(rng), u(rng), u(rng), u(rng), u(rng), 0};
    const double base = total_loss(b, w);
    const double d = u(rng);
    LossBreakdown c = b;
    c.L_e += d;
    CHECK(total_loss(c, w) - base == doctest::Approx(w.s_e * d).epsilon(1e-9));
    c = b;
    c.E_s += d;
    CHECK(total_loss(c, w) - base == doctest::Approx(w.s_w * d).epsilon(1e-9));
  }
}

TEST_CASE("gradient norm clamp") {
  std::vector<double> g{0.6, 0.8};
  CHECK(clamp_grad_norm(g, 1e-2, 1e10) == doctest::Approx(1.0));
  CHECK(g == std::vector<double>{0.6, 0.8});

  std::vector<double> small{6e-5, 8e-5};
  clamp_grad_norm(small, 1e-2, 1e10);
  CHECK(std::hypot(small[0], small[1]) == doctest::Approx(1e-2).epsilon(1e-9));
  CHECK(small[0] / small[1] == doctest::Approx(0.75).epsilon(1e-12));

  std::vector<double> big{3e10, 4e10};
  clamp_grad_norm(big, 1e-2, 1e10);
  CHECK(std::hypot(big[0], big[1]) == doctest::Approx(1e10).epsilon(1e-9));

  std::vector<double> zero{0, 0, 0};
  CHECK(clamp_grad_norm(zero, 1e-2, 1e10) == 0.0);
  CHECK(zero == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(clamp_grad_norm(g, 1.0, 0.5), InvalidInput);
}

TEST_CASE("gradient clamp preserves direction for random vectors") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> g(20);
    const double mag = std::pow(10.0, t % 24 - 12);
    for (double& x : g) x = n(rng) * mag;
    const std::vector<double> before = g;
    clamp_grad_norm(g, 1e-2, 1e10);
    double dot = 0, a = 0, b = 0;
    for (int i = 0; i < 20; ++i) {
      dot += before[i] * g[i];
      a += before[i] * before[i];
      b += g[i] * g[i];
    }
    CHECK(dot / std::sqrt(a * b) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("clamp on a parameter list rescales every gradient") {
  Tensor a = Tensor::parameter({3}, {1, 2, 3});
  Tensor b = Tensor::parameter({2}, {4, 5});
  ParameterList p;
  p.add("a", a);
  p.add("b", b);
  ops::scale(ops::add(ops::sum(a), ops::sum(b)), 1e-4).backward();
  const double n = clamp_grad_norm(p, 1e-2, 1e10);
  CHECK(n == doctest::Approx(1e-4 * std::sqrt(5.0)));
  double sq = 0;
  for (auto& it : p.items())
    for (real g : it.tensor.grad()) sq += g * g;
  CHECK(std::sqrt(sq) == doctest::Approx(1e-2).epsilon(1e-9));
}

TEST_CASE("finite-difference gradients of every loss") {
  SUBCASE("l1") {
    Tensor g = random_tensor({2, 1, 2, 5}, 21, 0, 1);
    const Tensor t = random_tensor({2, 1, 2, 5}, 22, 0, 1);
    auto r = fd_check(g, [&] { return l1_reconstruction(g, t, 2); });
    CHECK(r.checked == 20);
    CHECK(r.max_rel < 1e-3);
  }
  SUBCASE("sync") {
    Tensor v = random_tensor({4, 5}, 23);
    const Tensor s = random_tensor({4, 5}, 24);
    for (int i = 0; i < 20; ++i) v.values()[i] = std::abs(v[i]);
    Tensor sp = s.clone();
    for (real& x : sp.values()) x = std::abs(x);
    auto r = fd_check(v, [&] { return sync_loss(sync_prob(v, sp)); });
    CHECK(r.checked == 20);
    CHECK(r.max_rel < 1e-3);
  }
  SUBCASE("generator adversarial term") {
    Tensor fake = random_tensor({20}, 25, 0.05, 0.95);
    const Tensor real_s = random_tensor({20}, 26, 0.05, 0.95);
    auto r = fd_check(fake, [&] { return gan_losses(real_s, fake).L_g; });
    CHECK(r.max_rel < 1e-3);
  }
  SUBCASE("discriminator objective") {
    Tensor real_s = random_tensor({20}, 27, 0.05, 0.95);
    const Tensor fake = random_tensor({20}, 28, 0.05, 0.95);
    auto r = fd_check(real_s, [&] { return gan_losses(real_s, fake).L_d; });
    CHECK(r.max_rel < 1e-3);
  }
  SUBCASE("emotion objective through the softmax") {
    Tensor z = random_tensor({7, 3}, 29, -2, 2);
    auto r = fd_check(z, [&] { return emotion_loss(emotion_softmax(z), 1); });
    CHECK(r.checked == 21);
    CHECK(r.max_rel < 1e-3);
  }
}
