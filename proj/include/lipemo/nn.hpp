#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lipemo/tensor.hpp"

namespace lipemo {

// Seeded generator with distribution code of our own, so draws are identical
// across standard libraries (std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  int below(int n) { return static_cast<int>(engine_() % static_cast<std::uint64_t>(n)); }

 private:
  std::mt19937_64 engine_;
};

// Mixes several integers into one seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts);

struct NamedParam {
  std::string name;
  Tensor tensor;
};

class ParameterList {
 public:
  void add(std::string name, Tensor t) { items_.push_back({std::move(name), std::move(t)}); }
  void append(const ParameterList& other, const std::string& prefix);
  std::vector<NamedParam>& items() { return items_; }
  const std::vector<NamedParam>& items() const { return items_; }
  std::size_t scalar_count() const;
  void zero_grad();
  void set_requires_grad(bool on);
  bool all_finite() const;

 private:
  std::vector<NamedParam> items_;
};

// Stable 64-bit FNV-1a hash over parameter names, shapes and value bytes.
std::uint64_t fingerprint(const ParameterList& params);

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int kernel, int stride, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;
  int out_channels() const { return weight_.dim(0); }

 private:
  Tensor weight_;
  Tensor bias_;
  int stride_ = 1;
  int pad_ = 1;
};

class Linear {
 public:
  Linear() = default;
  Linear(int in_features, int out_features, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive-moment optimizer over a fixed parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(const ParameterList& params, AdamOptions opts);
  void step(ParameterList& params);
  const AdamOptions& options() const { return opts_; }
  std::int64_t steps() const { return t_; }

  // Flat moment buffers, for checkpointing.
  std::vector<std::vector<real>>& first_moments() { return m_; }
  std::vector<std::vector<real>>& second_moments() { return v_; }
  const std::vector<std::vector<real>>& first_moments() const { return m_; }
  const std::vector<std::vector<real>>& second_moments() const { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamOptions opts_;
  std::vector<std::vector<real>> m_;
  std::vector<std::vector<real>> v_;
  std::int64_t t_ = 0;
};

}  // namespace lipemo
