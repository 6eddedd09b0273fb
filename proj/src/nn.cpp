#include "lipemo/nn.hpp"

#include <cmath>
#include <cstring>

#include "lipemo/errors.hpp"
#include "lipemo/ops.hpp"

namespace lipemo {

double Rng::normal() {
  // Box-Muller; the second variate is discarded to keep the stream simple.
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9E3779B97F4A7C15ull;
  for (std::uint64_t p : parts) {
    std::uint64_t z = h ^ (p + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    h = z ^ (z >> 31);
  }
  return h;
}

void ParameterList::append(const ParameterList& other, const std::string& prefix) {
  for (const auto& p : other.items_) items_.push_back({prefix + p.name, p.tensor});
}

std::size_t ParameterList::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.size();
  return n;
}

void ParameterList::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

void ParameterList::set_requires_grad(bool on) {
  for (auto& p : items_) p.tensor.set_requires_grad(on);
}

bool ParameterList::all_finite() const {
  for (const auto& p : items_)
    for (real v : p.tensor.values())
      if (!std::isfinite(v)) return false;
  return true;
}

std::uint64_t fingerprint(const ParameterList& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& p : params.items()) {
    feed(p.name.data(), p.name.size());
    for (int d : p.tensor.shape()) feed(&d, sizeof d);
    feed(p.tensor.values().data(), p.tensor.size() * sizeof(real));
  }
  return h;
}

namespace {
Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  std::vector<real> v(numel(shape));
  for (auto& x : v) x = static_cast<real>(rng.uniform(-bound, bound));
  return Tensor::parameter(std::move(shape), std::move(v));
}
}  // namespace

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, Rng& rng)
    : stride_(stride), pad_(kernel / 2) {
  const double fan_in = static_cast<double>(in_ch) * kernel * kernel;
  weight_ = uniform_param({out_ch, in_ch, kernel, kernel}, std::sqrt(6.0 / fan_in), rng);
  bias_ = Tensor::parameter({out_ch}, std::vector<real>(out_ch, real(0)));
}

Tensor Conv2d::operator()(const Tensor& x) const {
  return ops::conv2d(x, weight_, bias_, stride_, pad_);
}

void Conv2d::collect(ParameterList& out, const std::string& prefix) const {
  out.add(prefix + ".weight", weight_);
  out.add(prefix + ".bias", bias_);
}

Linear::Linear(int in_features, int out_features, Rng& rng) {
  weight_ = uniform_param({out_features, in_features}, std::sqrt(6.0 / in_features), rng);
  bias_ = Tensor::parameter({out_features}, std::vector<real>(out_features, real(0)));
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight_, bias_); }

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.add(prefix + ".weight", weight_);
  out.add(prefix + ".bias", bias_);
}

Adam::Adam(const ParameterList& params, AdamOptions opts) : opts_(opts) {
  for (const auto& p : params.items()) {
    m_.emplace_back(p.tensor.size(), real(0));
    v_.emplace_back(p.tensor.size(), real(0));
  }
}

void Adam::step(ParameterList& params) {
  auto& items = params.items();
  if (items.size() != m_.size()) throw InvalidInput("Adam: parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  const real b1 = static_cast<real>(opts_.beta1), b2 = static_cast<real>(opts_.beta2);
  for (std::size_t k = 0; k < items.size(); ++k) {
    Tensor& t = items[k].tensor;
    auto g = t.grad();
    if (g.empty()) continue;
    auto w = t.values();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      w[i] -= static_cast<real>(opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps));
    }
  }
}

}  // namespace lipemo
