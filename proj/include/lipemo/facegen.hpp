#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lipemo/media.hpp"

namespace lipemo {

// Class order is fixed and shared by every emotion scorer: happy, neutral, sad.
enum class Emotion { happy = 0, neutral = 1, sad = 2 };
inline constexpr int kEmotionCount = 3;

std::string to_string(Emotion e);
Emotion parse_emotion(const std::string& name);

struct EmotionLabel {
  Emotion name = Emotion::neutral;
  int intensity = 1;

  void validate() const;
  // "<name>_<intensity>", the corpus directory name.
  std::string dir_name() const;
  bool operator==(const EmotionLabel&) const = default;
};

struct FaceParams {
  double mouth_open = 0.0;   // [0, 1]
  double mouth_curve = 0.0;  // [-1, 1], + smile
  double brow_angle = 0.0;   // [-1, 1], + raised
  double eye_open = 0.8;     // [0, 1]
  double pose_dx = 0.0;      // pixels
  double pose_dy = 0.0;      // pixels
  std::uint64_t identity_seed = 0;

  void validate() const;
};

struct ExpressionDelta {
  double mouth_curve = 0.0;
  double brow_angle = 0.0;
};

struct ExpressionConfig {
  double curve_per_level = 0.5;
  double brow_per_level = 0.5;
};

// Expression offset for an emotion label; neutral is the identity expression and
// happy/sad are mirror images.
ExpressionDelta emotion_params(const EmotionLabel& label, const ExpressionConfig& cfg = {});

struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct RenderedFrame {
  FrameStack frame;  // count == 1
  Landmarks landmarks;
  // Every pixel the mouth can touch for any mouth_open at these params.
  PixelBox mouth_box;
};

inline constexpr int kMinFrameSize = 32;

RenderedFrame render_frame(const FaceParams& params, int height, int width);

struct SynthConfig {
  int height = 64;
  int width = 64;
  int window = 5;             // frames per training window
  int steps_per_frame = 4;    // audio feature steps per video frame
  int bands = 16;
  double fps = 25.0;
  double jitter = 0.02;       // expression micro-jitter amplitude
  double pose_amplitude = 1.0;  // pixels at 64 px, scaled with frame width
  ExpressionConfig expression;
};

struct Utterance {
  int actor_id = 0;
  int utterance_id = 0;
  EmotionLabel emotion;
  double fps = 25.0;
  int steps_per_frame = 4;
  FrameStack frames;
  AudioFeatures audio;
  std::vector<Landmarks> landmarks;
  std::vector<FaceParams> params;  // ground truth per frame (not persisted)
};

// Per-frame audio envelope of an utterance; mouth_open follows it exactly.
std::vector<double> speech_envelope(int actor_id, int utterance_id, int num_frames,
                                    std::uint64_t seed);

Utterance synth_utterance(int actor_id, int utterance_id, const EmotionLabel& emotion,
                          int num_frames, std::uint64_t seed, const SynthConfig& cfg = {});

struct SplitSpec {
  std::vector<int> train_actors;
  std::vector<int> val_actors;
  std::vector<int> test_actors;
  std::uint64_t seed = 0;

  std::string split_of(int actor) const;
};

struct CorpusConfig {
  int actors = 12;
  int train_actors = 8;
  int val_actors = 2;
  int test_actors = 2;
  int utterances = 4;
  int frames_per_utterance = 40;
  std::vector<EmotionLabel> emotions{{Emotion::happy, 1}, {Emotion::neutral, 1},
                                     {Emotion::sad, 1}};
  std::uint64_t seed = 7;
  SynthConfig synth;
};

// Deterministic actor split of ids 0..actors-1.
SplitSpec make_splits(const CorpusConfig& cfg);

// Writes <root>/<actor>/<emotion>_<intensity>/<utterance>/{frames.bin,audio.bin,
// landmarks.json,meta.json}, plus splits.json and corpus.json at the root.
SplitSpec make_corpus(const CorpusConfig& cfg, const std::filesystem::path& root, int workers = 1);

std::string actor_dir(int actor);
std::string utterance_dir(int utt);

}  // namespace lipemo
