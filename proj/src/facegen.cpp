#include "lipemo/facegen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>

#include <nlohmann/json.hpp>

#include "lipemo/errors.hpp"
#include "lipemo/face_layout.hpp"
#include "lipemo/nn.hpp"
#include "lipemo/tensor_io.hpp"

namespace lipemo {

namespace L = layout;
using json = nlohmann::json;

std::string to_string(Emotion e) {
  switch (e) {
    case Emotion::happy: return "happy";
    case Emotion::neutral: return "neutral";
    case Emotion::sad: return "sad";
  }
  throw InvalidInput("unknown emotion");
}

Emotion parse_emotion(const std::string& name) {
  if (name == "happy") return Emotion::happy;
  if (name == "neutral") return Emotion::neutral;
  if (name == "sad") return Emotion::sad;
  throw InvalidInput("unknown emotion '" + name + "'");
}

void EmotionLabel::validate() const {
  const int v = static_cast<int>(name);
  if (v < 0 || v >= kEmotionCount) throw InvalidInput("emotion label out of range");
  if (intensity < 1) throw InvalidInput("emotion intensity must be >= 1");
  if (name == Emotion::neutral && intensity != 1)
    throw InvalidInput("neutral emotion has a fixed intensity of 1");
}

std::string EmotionLabel::dir_name() const {
  return to_string(name) + "_" + std::to_string(intensity);
}

void FaceParams::validate() const {
  auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };
  if (!in(mouth_open, 0, 1) || !in(mouth_curve, -1, 1) || !in(brow_angle, -1, 1) ||
      !in(eye_open, 0, 1) || !std::isfinite(pose_dx) || !std::isfinite(pose_dy))
    throw InvalidInput("face params out of range");
}

ExpressionDelta emotion_params(const EmotionLabel& label, const ExpressionConfig& cfg) {
  label.validate();
  const double level = static_cast<double>(label.intensity);
  switch (label.name) {
    case Emotion::neutral: return {0.0, 0.0};
    case Emotion::happy:
      return {std::min(1.0, cfg.curve_per_level * level), std::min(1.0, cfg.brow_per_level * level)};
    case Emotion::sad:
      return {-std::min(1.0, cfg.curve_per_level * level),
              -std::min(1.0, cfg.brow_per_level * level)};
  }
  throw InvalidInput("unknown emotion");
}

namespace {

using Rgb = std::array<double, 3>;

struct Identity {
  double scale;
  Rgb skin, background, feature;
};

Identity identity_from_seed(std::uint64_t seed) {
  Rng r(mix_seed({seed, 0x1D}));
  Identity id{};
  id.scale = 0.94 + 0.12 * r.uniform();
  const double g = 0.58 + 0.12 * r.uniform();
  id.skin = {g + 0.08 + 0.02 * (r.uniform() - 0.5), g, g - 0.06 + 0.02 * (r.uniform() - 0.5)};
  const double bg = 0.87 + 0.07 * r.uniform();
  for (auto& c : id.background) c = std::clamp(bg + 0.04 * (r.uniform() - 0.5), 0.84, 0.98);
  const double f = 0.08 + 0.05 * r.uniform();
  id.feature = {f + 0.03, f + 0.01, f};
  return id;
}

// Lips share one colour across identities (luminance 0.166).
constexpr Rgb kLipColor{0.38, 0.07, 0.10};

double coverage(double signed_px) { return std::clamp(0.5 - signed_px, 0.0, 1.0); }

void blend(Rgb& dst, const Rgb& src, double a) {
  if (a <= 0) return;
  for (int c = 0; c < 3; ++c) dst[c] += a * (src[c] - dst[c]);
}

// Approximate signed pixel distance to an axis-aligned ellipse boundary.
double ellipse_distance(double dx_px, double dy_px, double rx, double ry) {
  const double u = dx_px / rx, v = dy_px / ry;
  const double r = std::sqrt(u * u + v * v);
  if (r < 1e-9) return -std::min(rx, ry);
  const double len = std::sqrt(dx_px * dx_px + dy_px * dy_px);
  return (r - 1.0) * len / r;
}

struct Placement {
  double cx, cy, rx, ry;
};

Placement place(const FaceParams& p, const Identity& id, int h, int w) {
  return {w * L::kFaceCenterX + p.pose_dx, h * L::kFaceCenterY + p.pose_dy,
          w * L::kFaceRadiusX * id.scale, h * L::kFaceRadiusY * id.scale};
}

double mouth_half(double t, double open) {
  const double tt = std::min(1.0, t * t);
  return L::kLipHalfThickness + (L::kOpenBase + L::kOpenGain * open) * (1.0 - tt);
}

double mouth_center(double t, double curve) {
  const double tt = std::min(1.0, t * t);
  return L::kMouthCenterY - L::kCurveLift * curve * tt;
}

double brow_center(double brow) { return L::kBrowCenterY - L::kBrowShift * brow; }

double eye_radius_y(double eye_open) { return L::kEyeRadiusBase + L::kEyeRadiusGain * eye_open; }

}  // namespace

RenderedFrame render_frame(const FaceParams& params, int height, int width) {
  if (height < kMinFrameSize || width < kMinFrameSize)
    throw InvalidInput("frame size below minimum of " + std::to_string(kMinFrameSize));
  params.validate();
  const Identity id = identity_from_seed(params.identity_seed);
  const Placement pl = place(params, id, height, width);
  const double eye_ry = eye_radius_y(params.eye_open) * pl.ry;
  const double eye_rx = L::kEyeRadiusX * pl.rx;
  const double brow_v = brow_center(params.brow_angle);

  RenderedFrame out;
  out.frame = FrameStack(1, height, width, 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double px = x + 0.5 - pl.cx, py = y + 0.5 - pl.cy;
      const double u = px / pl.rx, v = py / pl.ry;
      Rgb col = id.background;
      blend(col, id.skin, coverage(ellipse_distance(px, py, pl.rx, pl.ry)));
      for (double side : {-1.0, 1.0}) {
        const double ex = px - side * L::kEyeCenterX * pl.rx;
        const double ey = py - L::kEyeCenterY * pl.ry;
        blend(col, id.feature, coverage(ellipse_distance(ex, ey, eye_rx, eye_ry)));
      }
      {
        const double au = std::abs(u);
        const double dh = std::max(L::kBrowInnerX - au, au - L::kBrowOuterX) * pl.rx;
        const double dv = (std::abs(v - brow_v) - L::kBrowHalfThickness) * pl.ry;
        blend(col, id.feature, coverage(dv) * coverage(dh));
      }
      {
        const double t = u / L::kMouthHalfWidth;
        const double dv =
            (std::abs(v - mouth_center(t, params.mouth_curve)) - mouth_half(t, params.mouth_open)) *
            pl.ry;
        const double dh = (std::abs(t) - 1.0) * L::kMouthHalfWidth * pl.rx;
        blend(col, kLipColor, coverage(dv) * coverage(dh));
      }
      for (int c = 0; c < 3; ++c)
        out.frame.at(0, y, x, c) = static_cast<float>(std::clamp(col[c], 0.0, 1.0));
    }
  }

  auto clamp_pt = [&](double x, double y) {
    return Point2{std::clamp(x, 0.0, width - 1e-3), std::clamp(y, 0.0, height - 1e-3)};
  };
  out.landmarks.resize(L::kLandmarkCount);
  for (int i = 0; i < L::kRingPoints; ++i) {
    const double a = 2.0 * M_PI * i / L::kRingPoints;
    out.landmarks[i] = clamp_pt(pl.cx + L::kRingScale * pl.rx * std::cos(a),
                                pl.cy + L::kRingScale * pl.ry * std::sin(a));
  }
  const double by = pl.cy + brow_v * pl.ry;
  out.landmarks[L::kBrowLeftInner] = clamp_pt(pl.cx - L::kBrowInnerX * pl.rx, by);
  out.landmarks[L::kBrowLeftOuter] = clamp_pt(pl.cx - L::kBrowOuterX * pl.rx, by);
  out.landmarks[L::kBrowRightInner] = clamp_pt(pl.cx + L::kBrowInnerX * pl.rx, by);
  out.landmarks[L::kBrowRightOuter] = clamp_pt(pl.cx + L::kBrowOuterX * pl.rx, by);
  const double corner_y = pl.cy + mouth_center(1.0, params.mouth_curve) * pl.ry;
  out.landmarks[L::kMouthLeft] = clamp_pt(pl.cx - L::kMouthHalfWidth * pl.rx, corner_y);
  out.landmarks[L::kMouthRight] = clamp_pt(pl.cx + L::kMouthHalfWidth * pl.rx, corner_y);
  const double half0 = mouth_half(0.0, params.mouth_open);
  out.landmarks[L::kMouthTop] = clamp_pt(pl.cx, pl.cy + (L::kMouthCenterY - half0) * pl.ry);
  out.landmarks[L::kMouthBottom] = clamp_pt(pl.cx, pl.cy + (L::kMouthCenterY + half0) * pl.ry);
  const double ey = pl.cy + L::kEyeCenterY * pl.ry;
  out.landmarks[L::kEyeLeft] = clamp_pt(pl.cx - L::kEyeCenterX * pl.rx, ey);
  out.landmarks[L::kEyeRight] = clamp_pt(pl.cx + L::kEyeCenterX * pl.rx, ey);

  // Mouth extent at maximal opening; the coverage ramps reach 0.5 px beyond it.
  const double lift = L::kCurveLift * params.mouth_curve;
  const double open_max = L::kOpenBase + L::kOpenGain;
  const double top_v = L::kMouthCenterY - L::kLipHalfThickness - std::max(lift, open_max);
  const double bottom_v = L::kMouthCenterY + L::kLipHalfThickness + std::max(open_max, -lift);
  const double half_w = L::kMouthHalfWidth * pl.rx;
  out.mouth_box = {std::max(0, static_cast<int>(std::floor(pl.cx - half_w - 1.0))),
                   std::max(0, static_cast<int>(std::floor(pl.cy + top_v * pl.ry - 1.0))),
                   std::min(width - 1, static_cast<int>(std::ceil(pl.cx + half_w + 1.0))),
                   std::min(height - 1, static_cast<int>(std::ceil(pl.cy + bottom_v * pl.ry + 1.0)))};
  return out;
}

std::vector<double> speech_envelope(int actor_id, int utterance_id, int num_frames,
                                    std::uint64_t seed) {
  Rng r(mix_seed({seed, static_cast<std::uint64_t>(actor_id),
                  static_cast<std::uint64_t>(utterance_id), 0xA0}));
  struct Component {
    double freq, phase, amp;
  };
  std::array<Component, 3> comps{};
  for (auto& c : comps) c = {1.5 + 3.5 * r.uniform(), 2.0 * M_PI * r.uniform(), 0.5 + 0.5 * r.uniform()};
  std::vector<double> env(num_frames);
  for (int f = 0; f < num_frames; ++f) {
    double acc = 0;
    for (const auto& c : comps) acc += c.amp * std::sin(2.0 * M_PI * c.freq * f / 25.0 + c.phase);
    env[f] = acc;
  }
  const auto [lo, hi] = std::minmax_element(env.begin(), env.end());
  const double mn = *lo, span = *hi - *lo;
  for (auto& e : env) e = span > 1e-9 ? 0.05 + 0.9 * (e - mn) / span : 0.5;
  return env;
}

Utterance synth_utterance(int actor_id, int utterance_id, const EmotionLabel& emotion,
                          int num_frames, std::uint64_t seed, const SynthConfig& cfg) {
  emotion.validate();
  if (num_frames < cfg.window)
    throw InvalidInput("utterance needs at least " + std::to_string(cfg.window) + " frames");
  const auto a = static_cast<std::uint64_t>(actor_id);
  const auto u = static_cast<std::uint64_t>(utterance_id);

  Utterance out;
  out.actor_id = actor_id;
  out.utterance_id = utterance_id;
  out.emotion = emotion;
  out.fps = cfg.fps;
  out.steps_per_frame = cfg.steps_per_frame;

  const auto env = speech_envelope(actor_id, utterance_id, num_frames, seed);

  // Audio: envelope times a per-actor spectral shape (mean 1 over bands) and a
  // zero-mean within-frame ripple, so each frame's mean envelope is env[f].
  Rng spec_rng(mix_seed({seed, a, 0x5B}));
  const double centre = spec_rng.uniform(2.0, cfg.bands - 3.0);
  const double width = 2.0 + 2.0 * spec_rng.uniform();
  std::vector<double> shape(cfg.bands);
  double total = 0;
  for (int b = 0; b < cfg.bands; ++b) {
    shape[b] = 0.4 + std::exp(-(b - centre) * (b - centre) / (2 * width * width));
    total += shape[b];
  }
  for (auto& s : shape) s *= cfg.bands / total;
  out.audio = AudioFeatures(num_frames * cfg.steps_per_frame, cfg.bands);
  for (int f = 0; f < num_frames; ++f)
    for (int j = 0; j < cfg.steps_per_frame; ++j) {
      const double ripple =
          cfg.steps_per_frame > 1 ? -1.0 + 2.0 * j / (cfg.steps_per_frame - 1) : 0.0;
      for (int b = 0; b < cfg.bands; ++b)
        out.audio.at(f * cfg.steps_per_frame + j, b) =
            static_cast<float>(env[f] * shape[b] * (1.0 + 0.1 * ripple));
    }

  Rng pose_rng(mix_seed({seed, a, u, 0x90}));
  const double amp = cfg.pose_amplitude * cfg.width / 64.0;
  const double fx = pose_rng.uniform(0.2, 0.6), px = pose_rng.uniform(0, 2 * M_PI);
  const double fy = pose_rng.uniform(0.2, 0.6), py = pose_rng.uniform(0, 2 * M_PI);
  const double pe = pose_rng.uniform(0, 2 * M_PI);

  const ExpressionDelta delta = emotion_params(emotion, cfg.expression);
  Rng jitter_rng(mix_seed({seed, a, u, static_cast<std::uint64_t>(emotion.name),
                           static_cast<std::uint64_t>(emotion.intensity), 0x17}));
  const std::uint64_t identity = mix_seed({seed, a, 0x1D});

  out.frames = FrameStack(num_frames, cfg.height, cfg.width, 3);
  out.landmarks.resize(num_frames);
  out.params.resize(num_frames);
  for (int f = 0; f < num_frames; ++f) {
    FaceParams p;
    p.identity_seed = identity;
    p.mouth_open = env[f];
    p.eye_open = 0.75 + 0.1 * std::sin(2 * M_PI * 0.25 * f / 25.0 + pe);
    p.pose_dx = amp * std::sin(2 * M_PI * fx * f / 25.0 + px);
    p.pose_dy = 0.6 * amp * std::sin(2 * M_PI * fy * f / 25.0 + py);
    const double jc = cfg.jitter * (2 * jitter_rng.uniform() - 1);
    const double jb = cfg.jitter * (2 * jitter_rng.uniform() - 1);
    p.mouth_curve = std::clamp(delta.mouth_curve + jc, -1.0, 1.0);
    p.brow_angle = std::clamp(delta.brow_angle + jb, -1.0, 1.0);
    RenderedFrame r = render_frame(p, cfg.height, cfg.width);
    std::copy(r.frame.data.begin(), r.frame.data.end(), out.frames.frame(f));
    out.landmarks[f] = std::move(r.landmarks);
    out.params[f] = p;
  }
  return out;
}

std::string SplitSpec::split_of(int actor) const {
  auto has = [actor](const std::vector<int>& v) {
    return std::find(v.begin(), v.end(), actor) != v.end();
  };
  if (has(train_actors)) return "train";
  if (has(val_actors)) return "val";
  if (has(test_actors)) return "test";
  throw InvalidInput("actor " + std::to_string(actor) + " not in any split");
}

SplitSpec make_splits(const CorpusConfig& cfg) {
  if (cfg.actors < 3) throw InvalidInput("corpus needs at least 3 actors");
  if (cfg.train_actors < 1 || cfg.val_actors < 1 || cfg.test_actors < 1 ||
      cfg.train_actors + cfg.val_actors + cfg.test_actors != cfg.actors)
    throw InvalidInput("split sizes must be >= 1 and sum to the actor count");
  std::vector<int> ids(cfg.actors);
  for (int i = 0; i < cfg.actors; ++i) ids[i] = i;
  Rng r(mix_seed({cfg.seed, 0x5711}));
  for (int i = cfg.actors - 1; i > 0; --i) std::swap(ids[i], ids[r.below(i + 1)]);
  SplitSpec s;
  s.seed = cfg.seed;
  s.train_actors.assign(ids.begin(), ids.begin() + cfg.train_actors);
  s.val_actors.assign(ids.begin() + cfg.train_actors,
                      ids.begin() + cfg.train_actors + cfg.val_actors);
  s.test_actors.assign(ids.begin() + cfg.train_actors + cfg.val_actors, ids.end());
  std::sort(s.train_actors.begin(), s.train_actors.end());
  std::sort(s.val_actors.begin(), s.val_actors.end());
  std::sort(s.test_actors.begin(), s.test_actors.end());
  return s;
}

std::string actor_dir(int actor) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "actor_%03d", actor);
  return buf;
}

std::string utterance_dir(int utt) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt_%03d", utt);
  return buf;
}

namespace {

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw InvalidInput("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

struct FrameSums {
  std::array<double, 3> sum{}, sq{};
  double grey_sum = 0, grey_sq = 0;
  double count = 0;
};

FrameSums frame_sums(const FrameStack& fs) {
  FrameSums s;
  const std::size_t pixels = static_cast<std::size_t>(fs.count) * fs.height * fs.width;
  for (std::size_t i = 0; i < pixels; ++i) {
    const float* p = fs.data.data() + i * 3;
    for (int c = 0; c < 3; ++c) {
      s.sum[c] += p[c];
      s.sq[c] += static_cast<double>(p[c]) * p[c];
    }
    const double g = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    s.grey_sum += g;
    s.grey_sq += g * g;
  }
  s.count = static_cast<double>(pixels);
  return s;
}

}  // namespace

SplitSpec make_corpus(const CorpusConfig& cfg, const std::filesystem::path& root, int workers) {
  const SplitSpec splits = make_splits(cfg);
  if (cfg.utterances < 1) throw InvalidInput("corpus needs at least one utterance");
  for (const auto& e : cfg.emotions) e.validate();
  std::filesystem::create_directories(root);

  struct Item {
    int actor, utt;
    EmotionLabel emotion;
  };
  std::vector<Item> items;
  for (int a = 0; a < cfg.actors; ++a)
    for (const auto& e : cfg.emotions)
      for (int u = 0; u < cfg.utterances; ++u) items.push_back({a, u, e});

  std::vector<FrameSums> sums(items.size());
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const int n = static_cast<int>(items.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
  for (int i = 0; i < n; ++i) {
    try {
      const Item& it = items[i];
      Utterance utt = synth_utterance(it.actor, it.utt, it.emotion, cfg.frames_per_utterance,
                                      cfg.seed, cfg.synth);
      const auto dir = root / actor_dir(it.actor) / it.emotion.dir_name() / utterance_dir(it.utt);
      std::filesystem::create_directories(dir);
      write_tensor_file(dir / "frames.bin",
                        {static_cast<std::uint64_t>(utt.frames.count),
                         static_cast<std::uint64_t>(utt.frames.height),
                         static_cast<std::uint64_t>(utt.frames.width),
                         static_cast<std::uint64_t>(utt.frames.channels)},
                        utt.frames.data);
      write_tensor_file(dir / "audio.bin",
                        {static_cast<std::uint64_t>(utt.audio.steps),
                         static_cast<std::uint64_t>(utt.audio.bands)},
                        utt.audio.data);
      json lm = json::array();
      for (const auto& frame : utt.landmarks) {
        json pts = json::array();
        for (const auto& p : frame) pts.push_back({p.x, p.y});
        lm.push_back(std::move(pts));
      }
      write_json(dir / "landmarks.json", lm);
      write_json(dir / "meta.json",
                 {{"actor", it.actor},
                  {"utterance", it.utt},
                  {"emotion", to_string(it.emotion.name)},
                  {"intensity", it.emotion.intensity},
                  {"fps", 25},
                  {"seed", cfg.seed},
                  {"frames", utt.frames.count},
                  {"steps_per_frame", cfg.synth.steps_per_frame},
                  {"bands", cfg.synth.bands},
                  {"height", cfg.synth.height},
                  {"width", cfg.synth.width},
                  {"split", splits.split_of(it.actor)}});
      sums[i] = frame_sums(utt.frames);
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  // Normalization statistics over the training split, reduced in item order.
  FrameSums total;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (splits.split_of(items[i].actor) != "train") continue;
    for (int c = 0; c < 3; ++c) {
      total.sum[c] += sums[i].sum[c];
      total.sq[c] += sums[i].sq[c];
    }
    total.grey_sum += sums[i].grey_sum;
    total.grey_sq += sums[i].grey_sq;
    total.count += sums[i].count;
  }
  json channel_mean = json::array(), channel_std = json::array();
  for (int c = 0; c < 3; ++c) {
    const double m = total.sum[c] / total.count;
    channel_mean.push_back(m);
    channel_std.push_back(std::sqrt(std::max(0.0, total.sq[c] / total.count - m * m)));
  }
  const double gm = total.grey_sum / total.count;
  const double gs = std::sqrt(std::max(0.0, total.grey_sq / total.count - gm * gm));

  write_json(root / "splits.json", {{"seed", splits.seed},
                                    {"train", splits.train_actors},
                                    {"val", splits.val_actors},
                                    {"test", splits.test_actors}});
  json emotions = json::array();
  for (const auto& e : cfg.emotions)
    emotions.push_back({{"name", to_string(e.name)}, {"intensity", e.intensity}});
  std::vector<int> boundary(layout::kRingPoints);
  for (int i = 0; i < layout::kRingPoints; ++i) boundary[i] = i;
  write_json(root / "corpus.json",
             {{"actors", cfg.actors},
              {"utterances", cfg.utterances},
              {"frames_per_utterance", cfg.frames_per_utterance},
              {"emotions", emotions},
              {"seed", cfg.seed},
              {"height", cfg.synth.height},
              {"width", cfg.synth.width},
              {"window", cfg.synth.window},
              {"steps_per_frame", cfg.synth.steps_per_frame},
              {"bands", cfg.synth.bands},
              {"fps", 25},
              {"jitter", cfg.synth.jitter},
              {"boundary_indices", boundary},
              {"channel_mean", channel_mean},
              {"channel_std", channel_std},
              {"grey_mean", gm},
              {"grey_std", gs}});
  return splits;
}

}  // namespace lipemo
