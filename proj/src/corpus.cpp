#include "lipemo/corpus.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

#include "lipemo/errors.hpp"
#include "lipemo/tensor_io.hpp"

namespace lipemo {

using json = nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

}  // namespace

bool CorpusInfo::has_emotion(const EmotionLabel& e) const {
  return std::find(emotions.begin(), emotions.end(), e) != emotions.end();
}

const std::vector<int>& CorpusInfo::split_actors(const std::string& split) const {
  if (split == "train") return splits.train_actors;
  if (split == "val") return splits.val_actors;
  if (split == "test") return splits.test_actors;
  throw InvalidInput("unknown split '" + split + "'");
}

std::string UtteranceKey::str() const {
  return actor_dir(actor) + "/" + emotion.dir_name() + "/" + utterance_dir(utterance);
}

Video read_video(const std::filesystem::path& dir) {
  Video v;
  const TensorFile frames = read_tensor_file(dir / "frames.bin");
  if (frames.dims.size() != 4) throw InvalidInput(dir.string() + ": frames.bin must be rank 4");
  v.frames.count = static_cast<int>(frames.dims[0]);
  v.frames.height = static_cast<int>(frames.dims[1]);
  v.frames.width = static_cast<int>(frames.dims[2]);
  v.frames.channels = static_cast<int>(frames.dims[3]);
  v.frames.data = frames.data;
  const TensorFile audio = read_tensor_file(dir / "audio.bin");
  if (audio.dims.size() != 2) throw InvalidInput(dir.string() + ": audio.bin must be rank 2");
  v.audio.steps = static_cast<int>(audio.dims[0]);
  v.audio.bands = static_cast<int>(audio.dims[1]);
  v.audio.data = audio.data;
  if (v.frames.count <= 0 || v.audio.steps % v.frames.count != 0)
    throw InvalidInput(dir.string() + ": audio steps are not a multiple of the frame count");
  v.steps_per_frame = v.audio.steps / v.frames.count;
  if (std::filesystem::exists(dir / "landmarks.json")) {
    const json lm = read_json(dir / "landmarks.json");
    for (const auto& frame : lm) {
      Landmarks pts;
      for (const auto& p : frame) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      v.landmarks.push_back(std::move(pts));
    }
    if (static_cast<int>(v.landmarks.size()) != v.frames.count)
      throw InvalidInput(dir.string() + ": landmark count does not match frames");
  }
  if (std::filesystem::exists(dir / "meta.json")) {
    const json meta = read_json(dir / "meta.json");
    v.fps = meta.value("fps", 25.0);
  }
  return v;
}

void write_video(const std::filesystem::path& dir, const Video& v) {
  std::filesystem::create_directories(dir);
  write_tensor_file(dir / "frames.bin",
                    {static_cast<std::uint64_t>(v.frames.count),
                     static_cast<std::uint64_t>(v.frames.height),
                     static_cast<std::uint64_t>(v.frames.width),
                     static_cast<std::uint64_t>(v.frames.channels)},
                    v.frames.data);
  write_tensor_file(dir / "audio.bin",
                    {static_cast<std::uint64_t>(v.audio.steps), static_cast<std::uint64_t>(v.audio.bands)},
                    v.audio.data);
  if (!v.landmarks.empty()) {
    json lm = json::array();
    for (const auto& frame : v.landmarks) {
      json pts = json::array();
      for (const auto& p : frame) pts.push_back({p.x, p.y});
      lm.push_back(std::move(pts));
    }
    std::ofstream os(dir / "landmarks.json", std::ios::trunc);
    os << lm.dump() << '\n';
  }
}

Corpus::Corpus(std::filesystem::path root) : root_(std::move(root)) {
  const json c = read_json(root_ / "corpus.json");
  const json s = read_json(root_ / "splits.json");
  try {
    info_.actors = c.at("actors");
    info_.utterances = c.at("utterances");
    info_.frames_per_utterance = c.at("frames_per_utterance");
    for (const auto& e : c.at("emotions"))
      info_.emotions.push_back({parse_emotion(e.at("name")), e.at("intensity").get<int>()});
    info_.seed = c.at("seed");
    info_.height = c.at("height");
    info_.width = c.at("width");
    info_.window = c.at("window");
    info_.steps_per_frame = c.at("steps_per_frame");
    info_.bands = c.at("bands");
    info_.fps = c.value("fps", 25.0);
    info_.jitter = c.value("jitter", 0.0);
    info_.boundary_indices = c.at("boundary_indices").get<std::vector<int>>();
    info_.norm.grey_mean = c.at("grey_mean");
    info_.norm.grey_std = c.at("grey_std");
    info_.splits.seed = s.at("seed");
    info_.splits.train_actors = s.at("train").get<std::vector<int>>();
    info_.splits.val_actors = s.at("val").get<std::vector<int>>();
    info_.splits.test_actors = s.at("test").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw InvalidInput(root_.string() + ": malformed corpus metadata: " + e.what());
  }
  if (info_.norm.grey_std <= 0) throw InvalidInput("corpus grey_std must be positive");
}

std::filesystem::path Corpus::dir(const UtteranceKey& key) const {
  return root_ / actor_dir(key.actor) / key.emotion.dir_name() / utterance_dir(key.utterance);
}

bool Corpus::exists(const UtteranceKey& key) const {
  return std::filesystem::exists(dir(key) / "frames.bin");
}

const Video& Corpus::video(const UtteranceKey& key) const {
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  if (!exists(key)) throw InvalidInput("missing utterance " + key.str());
  return cache_.emplace(key, read_video(dir(key))).first->second;
}

std::vector<UtteranceKey> Corpus::keys(const std::string& split, const EmotionLabel& emotion) const {
  std::vector<UtteranceKey> out;
  for (int a : info_.split_actors(split))
    for (int u = 0; u < info_.utterances; ++u) {
      UtteranceKey k{a, emotion, u};
      if (exists(k)) out.push_back(k);
    }
  return out;
}

}  // namespace lipemo
