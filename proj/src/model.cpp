#include "lipemo/model.hpp"

#include "lipemo/errors.hpp"
#include "lipemo/frame_tensor.hpp"
#include "lipemo/ops.hpp"

namespace lipemo {

namespace {
constexpr double kSlope = 0.2;
Tensor act(const Tensor& x) { return ops::leaky_relu(x, kSlope); }
}  // namespace

void ModelConfig::validate() const {
  if (encoder_widths.size() != 5) throw ConfigError("model: encoder_widths needs 5 entries");
  if (disc_widths.empty()) throw ConfigError("model: disc_widths is empty");
  const int down = 1 << (encoder_widths.size() - 1);
  if (height % down != 0 || width % down != 0)
    throw ConfigError("model: frame size must be divisible by " + std::to_string(down));
  if (channels <= 0 || steps_per_frame <= 0 || bands <= 0 || audio_dim <= 0)
    throw ConfigError("model: sizes must be positive");
  for (int w : encoder_widths)
    if (w <= 0) throw ConfigError("model: widths must be positive");
  for (int w : disc_widths)
    if (w <= 0) throw ConfigError("model: widths must be positive");
}

Generator::Generator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const auto& w = cfg.encoder_widths;
  enc_.emplace_back(2 * cfg.channels, w[0], 3, 1, rng);
  for (std::size_t i = 1; i < w.size(); ++i) enc_.emplace_back(w[i - 1], w[i], 3, 2, rng);
  a1_ = Conv2d(1, 16, 3, 1, rng);
  a2_ = Conv2d(16, 32, 3, 2, rng);
  a_out_ = Linear(32, cfg.audio_dim, rng);
  fuse_ = Conv2d(w.back() + cfg.audio_dim, w.back(), 3, 1, rng);
  // Decoder stage i upsamples and merges encoder level i (deepest first).
  int in = w.back();
  for (int i = static_cast<int>(w.size()) - 2; i >= 0; --i) {
    dec_.emplace_back(in + w[i], w[i], 3, 1, rng);
    in = w[i];
  }
  out_ = Conv2d(in, cfg.channels, 3, 1, rng);
}

Tensor Generator::operator()(const Tensor& input, const Tensor& audio) const {
  const int b = input.dim(0);
  if (input.rank() != 4 || input.dim(1) != 2 * cfg_.channels || input.dim(2) != cfg_.height ||
      input.dim(3) != cfg_.width)
    throw InvalidInput("generator: input " + shape_str(input.shape()) + " does not match config");
  if (audio.rank() != 4 || audio.dim(0) != b || audio.dim(1) != 1 ||
      audio.dim(2) != cfg_.steps_per_frame || audio.dim(3) != cfg_.bands)
    throw InvalidInput("generator: audio " + shape_str(audio.shape()) + " does not match config");

  std::vector<Tensor> skips;
  Tensor h = input;
  for (const auto& c : enc_) {
    h = act(c(h));
    skips.push_back(h);
  }
  Tensor a = act(a2_(act(a1_(audio))));
  a = act(a_out_(ops::global_avg_pool(a)));
  h = act(fuse_(ops::concat({h, ops::broadcast_spatial(a, h.dim(2), h.dim(3))}, 1)));
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    const Tensor& skip = skips[skips.size() - 2 - i];
    if (skip.dim(2) != h.dim(2)) h = ops::upsample2x(h);
    h = act(dec_[i](ops::concat({h, skip}, 1)));
  }
  return ops::sigmoid(out_(h));
}

ParameterList Generator::parameters() const {
  ParameterList p;
  for (std::size_t i = 0; i < enc_.size(); ++i) enc_[i].collect(p, "enc" + std::to_string(i));
  a1_.collect(p, "audio1");
  a2_.collect(p, "audio2");
  a_out_.collect(p, "audio_out");
  fuse_.collect(p, "fuse");
  for (std::size_t i = 0; i < dec_.size(); ++i) dec_[i].collect(p, "dec" + std::to_string(i));
  out_.collect(p, "out");
  return p;
}

QualityDiscriminator::QualityDiscriminator(const ModelConfig& cfg, Rng& rng)
    : residual_(cfg.disc_residual) {
  cfg.validate();
  int in = cfg.channels;
  for (int w : cfg.disc_widths) {
    down_.emplace_back(in, w, 3, 2, rng);
    res_.emplace_back(w, w, 3, 1, rng);
    in = w;
  }
  head_ = Linear(in, 1, rng);
}

Tensor QualityDiscriminator::frame_scores(const Tensor& frames) const {
  if (frames.rank() != 4) throw InvalidInput("discriminator: frames must be [N, C, H, W]");
  Tensor h = frames;
  for (std::size_t i = 0; i < down_.size(); ++i) {
    h = act(down_[i](h));
    Tensor r = act(res_[i](h));
    h = residual_ ? ops::add(h, r) : r;
  }
  Tensor z = head_(ops::global_avg_pool(h));
  return ops::reshape(ops::sigmoid(z), {frames.dim(0)});
}

Tensor QualityDiscriminator::operator()(const Tensor& frames, int window) const {
  if (window <= 0 || frames.rank() != 4 || frames.dim(0) % window != 0)
    throw InvalidInput("discriminator: frame count not a multiple of the window");
  return ops::mean_groups(frame_scores(frames), window);
}

ParameterList QualityDiscriminator::parameters() const {
  ParameterList p;
  for (std::size_t i = 0; i < down_.size(); ++i) {
    down_[i].collect(p, "down" + std::to_string(i));
    res_[i].collect(p, "res" + std::to_string(i));
  }
  head_.collect(p, "head");
  return p;
}

Models init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng g_rng(mix_seed({seed, 0x6E}));
  Rng d_rng(mix_seed({seed, 0xD5}));
  Models m{Generator(cfg, g_rng), QualityDiscriminator(cfg, d_rng)};
  return m;
}

FrameStack generator_forward(const Generator& g, const FrameStack& input, const AudioFeatures& audio) {
  const ModelConfig& cfg = g.config();
  if (input.channels != 2 * cfg.channels) throw InvalidInput("generator: input channel count");
  if (audio.steps != input.count * cfg.steps_per_frame || audio.bands != cfg.bands)
    throw InvalidInput("generator: audio does not cover the window");
  if (!g.parameters().all_finite()) throw NumericalError("generator parameters are not finite");
  NoGradGuard guard;
  Tensor out = g(to_tensor(input), audio_to_tensor(audio, input.count));
  return to_frames(out);
}

double quality_disc_forward(const QualityDiscriminator& d, const FrameStack& frames) {
  NoGradGuard guard;
  return d(to_tensor(frames), frames.count)[0];
}

}  // namespace lipemo
