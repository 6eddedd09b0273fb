#pragma once

#include <cstdint>
#include <vector>

#include "lipemo/media.hpp"
#include "lipemo/nn.hpp"
#include "lipemo/tensor.hpp"

namespace lipemo {

struct ModelConfig {
  int height = 64;
  int width = 64;
  int channels = 3;
  int steps_per_frame = 4;
  int bands = 16;
  // Encoder widths: one stride-1 stem followed by four stride-2 stages.
  std::vector<int> encoder_widths{16, 32, 64, 64, 128};
  int audio_dim = 64;
  std::vector<int> disc_widths{16, 32, 64};
  bool disc_residual = true;

  void validate() const;
};

// Identity encoder over [reference | pose prior], per-frame speech encoder
// broadcast into the bottleneck, and a skip-connected upsampling decoder.
class Generator {
 public:
  Generator() = default;
  Generator(const ModelConfig& cfg, Rng& rng);
  // input [B, 2C, H, W], audio [B, 1, steps_per_frame, bands] -> [B, C, H, W] in [0, 1].
  Tensor operator()(const Tensor& input, const Tensor& audio) const;
  ParameterList parameters() const;
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  std::vector<Conv2d> enc_;
  Conv2d a1_, a2_;
  Linear a_out_;
  Conv2d fuse_;
  std::vector<Conv2d> dec_;
  Conv2d out_;
};

// Full-frame realism discriminator: stride-2 stages, each followed by a
// residual block (identity shortcut when enabled), then pooling and a logistic
// head. Window score is the mean of per-frame scores.
class QualityDiscriminator {
 public:
  QualityDiscriminator() = default;
  QualityDiscriminator(const ModelConfig& cfg, Rng& rng);
  // frames [B*T, C, H, W] -> per-frame scores [B*T] in (0, 1).
  Tensor frame_scores(const Tensor& frames) const;
  // frames [B*T, C, H, W] -> window scores [B].
  Tensor operator()(const Tensor& frames, int window) const;
  ParameterList parameters() const;
  bool residual() const { return residual_; }
  void set_residual(bool on) { residual_ = on; }

 private:
  bool residual_ = true;
  std::vector<Conv2d> down_;
  std::vector<Conv2d> res_;
  Linear head_;
};

struct Models {
  Generator generator;
  QualityDiscriminator discriminator;
};

Models init_params(const ModelConfig& cfg, std::uint64_t seed);

// Frame-level convenience: input [T, H, W, 2C] and the window's audio
// [T*steps_per_frame, bands] -> generated [T, H, W, C].
FrameStack generator_forward(const Generator& g, const FrameStack& input, const AudioFeatures& audio);
// Realism score of one window.
double quality_disc_forward(const QualityDiscriminator& d, const FrameStack& frames);

}  // namespace lipemo
