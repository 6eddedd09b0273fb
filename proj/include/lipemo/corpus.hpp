#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "lipemo/facegen.hpp"
#include "lipemo/media.hpp"
#include "lipemo/scorers.hpp"

namespace lipemo {

// Contents of <root>/corpus.json and splits.json.
struct CorpusInfo {
  int actors = 0;
  int utterances = 0;
  int frames_per_utterance = 0;
  std::vector<EmotionLabel> emotions;
  std::uint64_t seed = 0;
  int height = 0;
  int width = 0;
  int window = 0;
  int steps_per_frame = 0;
  int bands = 0;
  double fps = 25.0;
  double jitter = 0.0;
  std::vector<int> boundary_indices;
  NormStats norm;
  SplitSpec splits;

  bool has_emotion(const EmotionLabel& e) const;
  const std::vector<int>& split_actors(const std::string& split) const;
};

struct UtteranceKey {
  int actor = 0;
  EmotionLabel emotion;
  int utterance = 0;
  auto tie() const {
    return std::make_tuple(actor, static_cast<int>(emotion.name), emotion.intensity, utterance);
  }
  bool operator<(const UtteranceKey& o) const { return tie() < o.tie(); }
  bool operator==(const UtteranceKey& o) const { return tie() == o.tie(); }
  std::string str() const;
};

struct Video {
  FrameStack frames;
  AudioFeatures audio;
  std::vector<Landmarks> landmarks;  // empty when not available
  double fps = 25.0;
  int steps_per_frame = 4;
};

Video read_video(const std::filesystem::path& dir);
// Writes frames.bin, audio.bin and (when present) landmarks.json.
void write_video(const std::filesystem::path& dir, const Video& v);

// Read access to a synthesized corpus with an in-memory cache.
class Corpus {
 public:
  explicit Corpus(std::filesystem::path root);
  const CorpusInfo& info() const { return info_; }
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path dir(const UtteranceKey& key) const;
  bool exists(const UtteranceKey& key) const;
  const Video& video(const UtteranceKey& key) const;
  std::vector<UtteranceKey> keys(const std::string& split, const EmotionLabel& emotion) const;

 private:
  std::filesystem::path root_;
  CorpusInfo info_;
  mutable std::map<UtteranceKey, Video> cache_;
};

}  // namespace lipemo
