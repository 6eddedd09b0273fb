#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lipemo/media.hpp"
#include "lipemo/nn.hpp"
#include "lipemo/tensor.hpp"

namespace lipemo {

// Greyscale normalization constants, computed from the training corpus.
struct NormStats {
  double grey_mean = 0.5;
  double grey_std = 0.25;
};

struct AffectScore {
  double valence = 0;  // [-1, 1]
  double arousal = 0;  // [0, 1]
};

// Logits over {happy, neutral, sad}, in that order.
struct EmotionLogits {
  std::array<double, 3> z{};
  int argmax() const;
};

struct SyncEmbeddingPair {
  std::vector<double> v;  // video, unit norm
  std::vector<double> s;  // audio, unit norm
  int dim() const { return static_cast<int>(v.size()); }
  double cosine() const;
};

struct FaceMeasurement {
  bool found = false;
  double mouth_curve = 0;
  double brow_angle = 0;
  double mouth_open = 0;
};

// Locates the face by its skin region and fits the renderer's mouth and brow
// geometry to the darkness map of the normalized greyscale frame.
// frames [N, 3, H, W] -> [N, 3] = (mouth_curve, brow_angle, mouth_open).
// Differentiable in the pixels; rows of frames without a face are zero.
Tensor measure_faces(const Tensor& frames, const NormStats& norm, std::vector<bool>& found);
FaceMeasurement measure_face(const FrameStack& frame, const NormStats& norm);

struct AnalyticConfig {
  double valence_curve = 0.8;
  double valence_brow = 0.2;
  double arousal_base = 0.3;
  double arousal_curve = 0.4;
  double arousal_open = 0.3;
  double logit_gain = 8.0;
  double logit_margin = 0.25;
  int sync_dim = 32;
  double sync_level = 0.05;
  std::uint64_t sync_seed = 0x51C;
};

inline constexpr std::uint64_t kAnalyticFingerprint = 0xA7A1C0DEull;

class EmotionScorer {
 public:
  virtual ~EmotionScorer() = default;
  // frames [N, 3, H, W] -> logits [N, 3].
  virtual Tensor logits(const Tensor& frames, std::vector<bool>& found) const = 0;
  virtual std::uint64_t fingerprint() const = 0;
  virtual std::string backend() const = 0;
};

class AffectScorer {
 public:
  virtual ~AffectScorer() = default;
  // frames [N, 3, H, W] -> [N, 2] = (valence, arousal).
  virtual Tensor affect(const Tensor& frames, std::vector<bool>& found) const = 0;
  virtual std::uint64_t fingerprint() const = 0;
  virtual std::string backend() const = 0;
};

class SyncScorer {
 public:
  virtual ~SyncScorer() = default;
  // frames [N*T, 3, H, W] (T consecutive frames per window), audio
  // [N, 1, T*steps_per_frame, bands] -> (video [N, D], audio [N, D]), not normalized.
  virtual std::pair<Tensor, Tensor> embed(const Tensor& frames, const Tensor& audio, int window,
                                          std::vector<bool>& valid) const = 0;
  virtual std::uint64_t fingerprint() const = 0;
  virtual std::string backend() const = 0;
};

class AnalyticEmotionScorer : public EmotionScorer {
 public:
  explicit AnalyticEmotionScorer(NormStats norm, AnalyticConfig cfg = {}) : norm_(norm), cfg_(cfg) {}
  Tensor logits(const Tensor& frames, std::vector<bool>& found) const override;
  std::uint64_t fingerprint() const override { return kAnalyticFingerprint; }
  std::string backend() const override { return "analytic"; }

 private:
  NormStats norm_;
  AnalyticConfig cfg_;
};

class AnalyticAffectScorer : public AffectScorer {
 public:
  explicit AnalyticAffectScorer(NormStats norm, AnalyticConfig cfg = {}) : norm_(norm), cfg_(cfg) {}
  Tensor affect(const Tensor& frames, std::vector<bool>& found) const override;
  std::uint64_t fingerprint() const override { return kAnalyticFingerprint; }
  std::string backend() const override { return "analytic"; }

 private:
  NormStats norm_;
  AnalyticConfig cfg_;
};

// Video side encodes the measured mouth-open trajectory, audio side the
// per-frame speech envelope; both centred and projected to `sync_dim` through a
// fixed orthonormal map, so cosine is 1 for synchronized synthetic pairs.
class AnalyticSyncScorer : public SyncScorer {
 public:
  explicit AnalyticSyncScorer(NormStats norm, AnalyticConfig cfg = {}) : norm_(norm), cfg_(cfg) {}
  std::pair<Tensor, Tensor> embed(const Tensor& frames, const Tensor& audio, int window,
                                  std::vector<bool>& valid) const override;
  std::uint64_t fingerprint() const override { return kAnalyticFingerprint; }
  std::string backend() const override { return "analytic"; }

 private:
  NormStats norm_;
  AnalyticConfig cfg_;
};

// Three stride-2 conv layers over the normalized greyscale frame, global
// average pooling and a linear head.
class GreyConvNet {
 public:
  GreyConvNet() = default;
  GreyConvNet(int in_ch, int outputs, NormStats norm, std::uint64_t seed);
  // x [N, 3*in_ch, H, W] RGB planes (in_ch frames stacked).
  Tensor operator()(const Tensor& x) const;
  ParameterList parameters() const;

 private:
  NormStats norm_;
  int in_ch_ = 1;
  Conv2d c1_, c2_, c3_;
  Linear head_;
};

struct ScorerFitOptions {
  int steps = 300;
  int batch = 32;
  double lr = 2e-3;
  std::uint64_t seed = 1;
};

class LearnedEmotionScorer : public EmotionScorer {
 public:
  LearnedEmotionScorer(NormStats norm, std::uint64_t seed);
  Tensor logits(const Tensor& frames, std::vector<bool>& found) const override;
  std::uint64_t fingerprint() const override;
  std::string backend() const override { return "learned"; }
  // Cross-entropy training on frames [N, 3, H, W] with class labels; freezes
  // the parameters afterwards. Returns the final mean loss.
  double fit(const Tensor& frames, const std::vector<int>& labels, const ScorerFitOptions& opts);
  ParameterList parameters() const { return net_.parameters(); }

 private:
  GreyConvNet net_;
};

class LearnedAffectScorer : public AffectScorer {
 public:
  LearnedAffectScorer(NormStats norm, std::uint64_t seed);
  Tensor affect(const Tensor& frames, std::vector<bool>& found) const override;
  std::uint64_t fingerprint() const override;
  std::string backend() const override { return "learned"; }
  // Squared-error regression onto targets [N, 2].
  double fit(const Tensor& frames, const Tensor& targets, const ScorerFitOptions& opts);
  ParameterList parameters() const { return net_.parameters(); }

 private:
  GreyConvNet net_;
};

class LearnedSyncScorer : public SyncScorer {
 public:
  LearnedSyncScorer(NormStats norm, int window, int steps_per_frame, int bands, int dim,
                    std::uint64_t seed);
  std::pair<Tensor, Tensor> embed(const Tensor& frames, const Tensor& audio, int window,
                                  std::vector<bool>& valid) const override;
  std::uint64_t fingerprint() const override;
  std::string backend() const override { return "learned"; }
  // Binary cross-entropy on clamped cosine: label 1 for aligned windows, 0 for
  // windows whose audio is offset. frames [N*T, 3, H, W], audio [N, 1, S, M].
  double fit(const Tensor& frames, const Tensor& audio, const std::vector<int>& labels,
             const ScorerFitOptions& opts);
  ParameterList parameters() const;

 private:
  int window_;
  GreyConvNet video_;
  Conv2d a1_, a2_, a3_;
  Linear a_head_;
};

struct ScorerSet {
  std::shared_ptr<const SyncScorer> sync;
  std::shared_ptr<const EmotionScorer> emotion;
  std::shared_ptr<const AffectScorer> affect;
};

ScorerSet analytic_scorers(const NormStats& norm, const AnalyticConfig& cfg = {});

// Single-frame / single-window conveniences. Throw NoFaceFound when the scorer
// cannot find a face.
EmotionLogits emotion_logits(const FrameStack& frame, const EmotionScorer& scorer);
AffectScore affect_score(const FrameStack& frame, const AffectScorer& scorer);
SyncEmbeddingPair sync_embed(const FrameStack& frames, const AudioFeatures& audio,
                             const SyncScorer& scorer);

// Stable hash of a scorer's parameters (constant sentinel for analytic ones).
template <class Scorer>
std::uint64_t freeze_check(const Scorer& scorer) {
  return scorer.fingerprint();
}

}  // namespace lipemo
