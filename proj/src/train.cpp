#include "lipemo/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lipemo/errors.hpp"
#include "lipemo/frame_tensor.hpp"
#include "lipemo/ops.hpp"
#include "lipemo/tensor_io.hpp"

namespace lipemo {

using json = nlohmann::json;

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::L1: return "l1";
    case Strategy::EMO: return "emo";
    case Strategy::L1_EMO: return "l1_emo";
  }
  throw InvalidInput("unknown strategy");
}

Strategy parse_strategy(const std::string& name) {
  if (name == "l1" || name == "L1") return Strategy::L1;
  if (name == "emo" || name == "EMO") return Strategy::EMO;
  if (name == "l1_emo" || name == "L1_EMO" || name == "l1+emo") return Strategy::L1_EMO;
  throw InvalidInput("unknown strategy '" + name + "' (expected l1, emo or l1_emo)");
}

LossWeights VariantConfig::effective_weights() const {
  LossWeights w = weights;
  if (strategy == Strategy::L1) w.s_e = 0.0;
  return w;
}

std::string VariantConfig::name() const {
  return to_string(masking.kind) + ":" + to_string(strategy);
}

void VariantConfig::validate() const {
  weights.validate();
  source.validate();
  destination.validate();
}

VariantConfig make_variant(MaskKind masking, Strategy strategy, const EmotionLabel& source,
                           const EmotionLabel& destination) {
  VariantConfig v;
  v.masking.kind = masking;
  v.strategy = strategy;
  v.source = source;
  v.destination = destination;
  if (strategy == Strategy::EMO) v.weights = {0.6, 0.03, 0.07, 0.3};
  v.validate();
  return v;
}

EmotionLabel pose_prior_emotion(const VariantConfig& v) {
  return v.masking.kind == MaskKind::full ? v.destination : v.source;
}

EmotionLabel target_emotion(const VariantConfig& v) {
  return v.strategy == Strategy::EMO ? v.source : v.destination;
}

std::string pairing_table() {
  std::ostringstream os;
  os << "masking  strategy  reference  pose prior    target\n";
  for (MaskKind m : {MaskKind::half, MaskKind::full})
    for (Strategy s : {Strategy::L1, Strategy::EMO, Strategy::L1_EMO}) {
      VariantConfig v;
      v.masking.kind = m;
      v.strategy = s;
      char line[128];
      std::snprintf(line, sizeof line, "%-8s %-9s %-10s %-13s %s\n", to_string(m).c_str(),
                    to_string(s).c_str(), "source",
                    pose_prior_emotion(v) == v.source ? "source" : "destination",
                    target_emotion(v) == v.source ? "source" : "destination");
      os << line;
    }
  return os.str();
}

Batch assemble_batch(const Corpus& corpus, const VariantConfig& variant, int batch_size,
                     std::uint64_t seed, const std::string& split) {
  if (batch_size < 1) throw InvalidInput("batch size must be >= 1");
  const CorpusInfo& info = corpus.info();
  const auto& actors = info.split_actors(split);
  if (actors.empty()) throw InvalidInput("split '" + split + "' has no actors");
  const int t = info.window;
  const EmotionLabel pose_e = pose_prior_emotion(variant);
  const EmotionLabel target_e = target_emotion(variant);
  Rng rng(seed);
  Batch b;
  for (int attempt = 0; attempt < 4 * batch_size && static_cast<int>(b.samples.size()) < batch_size;
       ++attempt) {
    const int actor = actors[rng.below(static_cast<int>(actors.size()))];
    const int utt = rng.below(info.utterances);
    const UtteranceKey ref_k{actor, variant.source, utt};
    const UtteranceKey pose_k{actor, pose_e, utt};
    const UtteranceKey target_k{actor, target_e, utt};
    const std::uint64_t r0 = rng.next() >> 1, r1 = rng.next() >> 1;
    if (!corpus.exists(ref_k) || !corpus.exists(pose_k) || !corpus.exists(target_k)) {
      ++b.skipped;
      continue;
    }
    const Video& ref = corpus.video(ref_k);
    const Video& pose = corpus.video(pose_k);
    const Video& target = corpus.video(target_k);
    const int frames = std::min({ref.frames.count, pose.frames.count, target.frames.count});
    if (frames < t) {
      ++b.skipped;
      continue;
    }
    TrainingSample s;
    s.reference_key = ref_k;
    s.pose_key = pose_k;
    s.target_key = target_k;
    s.start = static_cast<int>(r0 % static_cast<std::uint64_t>(frames - t + 1));
    s.reference_start = static_cast<int>(r1 % static_cast<std::uint64_t>(frames - t + 1));
    s.reference = ref.frames.window(s.reference_start, t);
    s.pose_source = pose.frames.window(s.start, t);
    if (!pose.landmarks.empty())
      s.pose_landmarks.assign(pose.landmarks.begin() + s.start, pose.landmarks.begin() + s.start + t);
    s.target = target.frames.window(s.start, t);
    s.audio = target.audio.window(s.start * target.steps_per_frame, t * target.steps_per_frame);
    s.source = variant.source;
    s.destination = variant.destination;
    b.samples.push_back(std::move(s));
  }
  return b;
}

void TrainConfig::validate() const {
  variant.validate();
  model.validate();
  if (steps < 0 || batch < 1 || eval_interval < 0 || val_videos < 0)
    throw ConfigError("train: steps/batch/eval_interval out of range");
  if (!(adam.lr > 0)) throw ConfigError("train: learning rate must be positive");
  if (scorer_backend != "analytic" && scorer_backend != "learned")
    throw ConfigError("scorer.backend must be analytic or learned");
  if (l1_reduction != "window_sum" && l1_reduction != "mean")
    throw ConfigError("l1_reduction must be window_sum or mean");
  if (!(grad_lo > 0 && grad_hi > grad_lo)) throw ConfigError("grad clamp needs 0 < lo < hi");
}

namespace {

EmotionLabel parse_label(const std::string& s) {
  const auto pos = s.find('_');
  if (pos == std::string::npos) return {parse_emotion(s), 1};
  return {parse_emotion(s.substr(0, pos)), std::stoi(s.substr(pos + 1))};
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, _] : j.items())
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) ==
        allowed.end())
      throw ConfigError(where + ": unknown key '" + k + "'");
}

json model_to_json(const ModelConfig& m) {
  return {{"height", m.height},
          {"width", m.width},
          {"channels", m.channels},
          {"steps_per_frame", m.steps_per_frame},
          {"bands", m.bands},
          {"encoder_widths", m.encoder_widths},
          {"audio_dim", m.audio_dim},
          {"disc_widths", m.disc_widths},
          {"disc_residual", m.disc_residual}};
}

ModelConfig model_from_json(const json& j, ModelConfig m) {
  check_keys(j, {"height", "width", "channels", "steps_per_frame", "bands", "encoder_widths",
                 "audio_dim", "disc_widths", "disc_residual"},
             "model");
  m.height = j.value("height", m.height);
  m.width = j.value("width", m.width);
  m.channels = j.value("channels", m.channels);
  m.steps_per_frame = j.value("steps_per_frame", m.steps_per_frame);
  m.bands = j.value("bands", m.bands);
  m.encoder_widths = j.value("encoder_widths", m.encoder_widths);
  m.audio_dim = j.value("audio_dim", m.audio_dim);
  m.disc_widths = j.value("disc_widths", m.disc_widths);
  m.disc_residual = j.value("disc_residual", m.disc_residual);
  return m;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  try {
    check_keys(j, {"corpus", "out_dir", "variant", "model", "steps", "batch", "eval_interval", "lr",
                   "beta1", "beta2", "seed", "scorer", "l1_reduction", "grad_clamp", "workers",
                   "init_checkpoint", "val_videos", "pretrain_sync_target",
                   "pretrain_check_interval"},
               "train");
    if (j.contains("corpus")) c.corpus = j["corpus"].get<std::string>();
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("variant")) {
      const json& v = j["variant"];
      check_keys(v, {"masking", "strategy", "source", "destination", "weights"}, "variant");
      const MaskKind m = parse_mask_kind(v.value("masking", to_string(c.variant.masking.kind)));
      const Strategy s = parse_strategy(v.value("strategy", to_string(c.variant.strategy)));
      const EmotionLabel src = v.contains("source") ? parse_label(v["source"]) : c.variant.source;
      const EmotionLabel dst =
          v.contains("destination") ? parse_label(v["destination"]) : c.variant.destination;
      c.variant = make_variant(m, s, src, dst);
      if (v.contains("weights")) {
        const json& w = v["weights"];
        check_keys(w, {"s_r", "s_w", "s_g", "s_e"}, "weights");
        c.variant.weights.s_r = w.value("s_r", c.variant.weights.s_r);
        c.variant.weights.s_w = w.value("s_w", c.variant.weights.s_w);
        c.variant.weights.s_g = w.value("s_g", c.variant.weights.s_g);
        c.variant.weights.s_e = w.value("s_e", c.variant.weights.s_e);
      }
    }
    if (j.contains("model")) c.model = model_from_json(j["model"], c.model);
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.seed = j.value("seed", c.seed);
    if (j.contains("scorer")) {
      check_keys(j["scorer"], {"backend"}, "scorer");
      c.scorer_backend = j["scorer"].value("backend", c.scorer_backend);
    }
    c.l1_reduction = j.value("l1_reduction", c.l1_reduction);
    if (j.contains("grad_clamp")) {
      c.grad_lo = j["grad_clamp"].at(0);
      c.grad_hi = j["grad_clamp"].at(1);
    }
    c.workers = j.value("workers", c.workers);
    if (j.contains("init_checkpoint")) c.init_checkpoint = j["init_checkpoint"].get<std::string>();
    c.val_videos = j.value("val_videos", c.val_videos);
    c.pretrain_sync_target = j.value("pretrain_sync_target", c.pretrain_sync_target);
    c.pretrain_check_interval = j.value("pretrain_check_interval", c.pretrain_check_interval);
    c.validate();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  const auto& w = c.variant.weights;
  return {{"corpus", c.corpus.string()},
          {"out_dir", c.out_dir.string()},
          {"variant",
           {{"masking", to_string(c.variant.masking.kind)},
            {"strategy", to_string(c.variant.strategy)},
            {"source", c.variant.source.dir_name()},
            {"destination", c.variant.destination.dir_name()},
            {"weights", {{"s_r", w.s_r}, {"s_w", w.s_w}, {"s_g", w.s_g}, {"s_e", w.s_e}}}}},
          {"model", model_to_json(c.model)},
          {"steps", c.steps},
          {"batch", c.batch},
          {"eval_interval", c.eval_interval},
          {"lr", c.adam.lr},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"seed", c.seed},
          {"scorer", {{"backend", c.scorer_backend}}},
          {"l1_reduction", c.l1_reduction},
          {"grad_clamp", {c.grad_lo, c.grad_hi}},
          {"workers", c.workers},
          {"init_checkpoint", c.init_checkpoint.string()},
          {"val_videos", c.val_videos},
          {"pretrain_sync_target", c.pretrain_sync_target},
          {"pretrain_check_interval", c.pretrain_check_interval}};
}

std::uint64_t model_config_hash(const ModelConfig& m, MaskKind masking) {
  json j = model_to_json(m);
  j["masking"] = to_string(masking);
  return fnv1a(j.dump());
}

ModelConfig model_config_for(const CorpusInfo& info, ModelConfig base) {
  base.height = info.height;
  base.width = info.width;
  base.steps_per_frame = info.steps_per_frame;
  base.bands = info.bands;
  base.validate();
  return base;
}

ScorerFingerprints fingerprints(const ScorerSet& s) {
  return {s.sync->fingerprint(), s.emotion->fingerprint(), s.affect->fingerprint()};
}

namespace {

FrameStack stack_frames(const std::vector<const FrameStack*>& parts) {
  int total = 0;
  for (const auto* p : parts) total += p->count;
  const FrameStack& f = *parts.front();
  FrameStack out(total, f.height, f.width, f.channels);
  std::size_t off = 0;
  for (const auto* p : parts) {
    if (!p->same_geometry(f)) throw InvalidInput("stack_frames: geometry mismatch");
    std::copy(p->data.begin(), p->data.end(), out.data.begin() + static_cast<long>(off));
    off += p->data.size();
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.size() == 1) return parts.front();
  NoGradGuard guard;
  return ops::concat(parts, 0);
}

}  // namespace

ScorerSet make_scorers(const Corpus& corpus, const std::string& backend, std::uint64_t seed) {
  const CorpusInfo& info = corpus.info();
  if (backend == "analytic") return analytic_scorers(info.norm);
  if (backend != "learned") throw ConfigError("unknown scorer backend '" + backend + "'");

  // Training material: every 4th frame of each training utterance.
  std::vector<const FrameStack*> frames_parts;
  std::vector<FrameStack> picked;
  std::vector<int> labels;
  picked.reserve(256);
  const int t = info.window;
  std::vector<Tensor> sync_frames, sync_audio;
  std::vector<int> sync_labels;
  Rng rng(mix_seed({seed, 0x5C0}));
  for (const auto& e : info.emotions)
    for (const auto& key : corpus.keys("train", e)) {
      const Video& v = corpus.video(key);
      for (int f = 0; f < v.frames.count; f += 4) {
        picked.push_back(v.frames.window(f, 1));
        labels.push_back(static_cast<int>(e.name));
      }
      for (int k = 0; k < 4; ++k) {
        const int nw = v.frames.count - t + 1;
        const int s = rng.below(nw);
        int a = s;
        const bool positive = k % 2 == 0;
        if (!positive) a = (s + 2 + rng.below(std::max(1, nw - 4))) % nw;
        sync_frames.push_back(to_tensor(v.frames.window(s, t)));
        sync_audio.push_back(
            audio_to_tensor(v.audio.window(a * v.steps_per_frame, t * v.steps_per_frame), 1));
        sync_labels.push_back(positive ? 1 : 0);
      }
    }
  for (const auto& p : picked) frames_parts.push_back(&p);
  const Tensor frames = to_tensor(stack_frames(frames_parts));

  ScorerFitOptions opts;
  opts.seed = mix_seed({seed, 0xF17});
  auto emotion = std::make_shared<LearnedEmotionScorer>(info.norm, mix_seed({seed, 1}));
  emotion->fit(frames, labels, opts);

  // Affect targets come from the analytic oracle on the same frames.
  AnalyticAffectScorer oracle(info.norm);
  std::vector<bool> found;
  Tensor targets;
  {
    NoGradGuard guard;
    targets = oracle.affect(frames, found).detach();
  }
  auto affect = std::make_shared<LearnedAffectScorer>(info.norm, mix_seed({seed, 2}));
  affect->fit(frames, targets, opts);

  auto sync = std::make_shared<LearnedSyncScorer>(info.norm, t, info.steps_per_frame, info.bands,
                                                  32, mix_seed({seed, 3}));
  sync->fit(concat_rows(sync_frames), concat_rows(sync_audio), sync_labels, opts);
  return {sync, emotion, affect};
}

TrainState init_state(const ModelConfig& model, MaskKind masking, const AdamOptions& adam,
                      std::uint64_t seed) {
  TrainState s;
  s.models = init_params(model, seed);
  s.g_opt = Adam(s.models.generator.parameters(), adam);
  s.d_opt = Adam(s.models.discriminator.parameters(), adam);
  s.config_hash = model_config_hash(model, masking);
  s.masking = masking;
  s.models.generator.parameters().set_requires_grad(false);
  s.models.discriminator.parameters().set_requires_grad(false);
  return s;
}

namespace {

struct BatchTensors {
  Tensor input;         // [B*T, 2C, H, W]
  Tensor audio_frames;  // [B*T, 1, spf, bands]
  Tensor audio_windows; // [B, 1, T*spf, bands]
  Tensor target;        // [B*T, C, H, W]
  int windows = 0;
  int window = 0;
};

BatchTensors batch_tensors(const Batch& batch, MaskStrategy masking, const std::vector<int>& boundary) {
  if (batch.samples.empty()) throw InvalidInput("empty training batch");
  BatchTensors bt;
  bt.windows = static_cast<int>(batch.samples.size());
  bt.window = batch.samples.front().target.count;
  std::vector<FrameStack> inputs;
  std::vector<const FrameStack*> in_ptrs, tgt_ptrs;
  std::vector<Tensor> af, aw;
  inputs.reserve(batch.samples.size());
  for (const auto& s : batch.samples) {
    inputs.push_back(
        build_generator_input(s.reference, s.pose_source, masking, s.pose_landmarks, boundary));
    af.push_back(audio_to_tensor(s.audio, s.target.count));
    aw.push_back(audio_to_tensor(s.audio, 1));
    tgt_ptrs.push_back(&s.target);
  }
  for (const auto& f : inputs) in_ptrs.push_back(&f);
  bt.input = to_tensor(stack_frames(in_ptrs));
  bt.target = to_tensor(stack_frames(tgt_ptrs));
  bt.audio_frames = concat_rows(af);
  bt.audio_windows = concat_rows(aw);
  return bt;
}

void dump_batch(const std::filesystem::path& dir, const BatchTensors& bt, const Batch& batch) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  auto dims = [](const Tensor& t) {
    std::vector<std::uint64_t> d;
    for (int s : t.shape()) d.push_back(static_cast<std::uint64_t>(s));
    return d;
  };
  auto as_float = [](const Tensor& t) { return std::vector<float>(t.values().begin(), t.values().end()); };
  write_tensor_file(dir / "input.bin", dims(bt.input), as_float(bt.input));
  write_tensor_file(dir / "target.bin", dims(bt.target), as_float(bt.target));
  write_tensor_file(dir / "audio.bin", dims(bt.audio_windows), as_float(bt.audio_windows));
  std::ofstream os(dir / "samples.txt");
  for (const auto& s : batch.samples)
    os << s.target_key.str() << " start " << s.start << " reference " << s.reference_key.str()
       << " start " << s.reference_start << "\n";
}

}  // namespace

LossBreakdown train_step(TrainState& state, const Batch& batch, const ScorerSet& scorers,
                         const StepOptions& opts, const std::vector<int>& boundary) {
  const BatchTensors bt = batch_tensors(batch, {state.masking}, boundary);
  Generator& g = state.models.generator;
  QualityDiscriminator& d = state.models.discriminator;
  ParameterList gp = g.parameters(), dp = d.parameters();
  const LossWeights& w = opts.weights;
  const int n = bt.windows, t = bt.window;

  gp.set_requires_grad(true);
  dp.set_requires_grad(false);
  gp.zero_grad();
  Tensor gen = g(bt.input, bt.audio_frames);

  // Each term is built on the graph only when its weight is non-zero.
  auto term = [&](double weight, const std::function<Tensor(const Tensor&)>& fn) {
    if (weight > 0) return fn(gen);
    NoGradGuard guard;
    return fn(gen.detach());
  };

  Tensor l_r = term(w.s_r, [&](const Tensor& x) {
    if (opts.l1_reduction == "mean") return ops::mean(ops::abs(ops::sub(x, bt.target)));
    return l1_reconstruction(x, bt.target, n);
  });

  Tensor e_s = term(w.s_w, [&](const Tensor& x) {
    std::vector<bool> valid;
    auto [v, s] = scorers.sync->embed(x, bt.audio_windows, t, valid);
    Tensor p = sync_prob(v, s);
    // Windows with an unreadable mouth get the floor probability, no gradient.
    std::vector<real> keep(n), fill(n);
    for (int i = 0; i < n; ++i) {
      keep[i] = valid[i] ? real(1) : real(0);
      fill[i] = valid[i] ? real(0) : static_cast<real>(kProbFloor);
    }
    p = ops::add(ops::mul(p, Tensor({n}, keep)), Tensor({n}, fill));
    return sync_loss(p);
  });

  Tensor d_real;
  {
    NoGradGuard guard;
    d_real = d(bt.target, t);
  }
  Tensor l_g = term(w.s_g, [&](const Tensor& x) { return gan_losses(d_real, d(x, t)).L_g; });

  Tensor l_e = term(w.s_e, [&](const Tensor& x) {
    std::vector<bool> found;
    Tensor probs = emotion_softmax(scorers.emotion->logits(x, found));
    const int frames = static_cast<int>(found.size());
    const int count = static_cast<int>(std::count(found.begin(), found.end(), true));
    if (count == 0) return Tensor::scalar(1);
    std::vector<real> mask(frames);
    for (int i = 0; i < frames; ++i) mask[i] = found[i] ? real(1) : real(0);
    Tensor g_d = ops::mul(ops::select_col(probs, opts.desired_class), Tensor({frames}, mask));
    return ops::add_scalar(ops::scale(ops::sum(g_d), -1.0 / count), 1.0);
  });

  LossBreakdown b;
  b.L_r = l_r.item();
  b.E_s = e_s.item();
  b.L_g = l_g.item();
  b.L_e = l_e.item();

  std::vector<Tensor> weighted;
  if (w.s_r > 0) weighted.push_back(ops::scale(l_r, w.s_r));
  if (w.s_w > 0) weighted.push_back(ops::scale(e_s, w.s_w));
  if (w.s_g > 0) weighted.push_back(ops::scale(l_g, w.s_g));
  if (w.s_e > 0) weighted.push_back(ops::scale(l_e, w.s_e));

  // Discriminator objective, measured before any update.
  Tensor gen_detached = gen.detach();
  {
    NoGradGuard guard;
    b.L_d = gan_losses(d_real, d(gen_detached, t)).L_d.item();
  }
  b.L_total = total_loss(b, w);
  if (!b.finite()) {
    dump_batch(opts.dump_dir, bt, batch);
    throw NumericalError("non-finite loss at step " + std::to_string(state.step) +
                         (opts.dump_dir.empty() ? std::string()
                                                : "; batch dumped to " + opts.dump_dir.string()));
  }

  if (!weighted.empty()) {
    Tensor total = weighted.front();
    for (std::size_t i = 1; i < weighted.size(); ++i) total = ops::add(total, weighted[i]);
    if (total.requires_grad()) {
      total.backward();
      clamp_grad_norm(gp, opts.grad_lo, opts.grad_hi);
      state.g_opt.step(gp);
    }
  }
  gp.set_requires_grad(false);
  gp.zero_grad();

  if (w.s_g > 0) {
    dp.set_requires_grad(true);
    dp.zero_grad();
    GanLosses gl = gan_losses(d(bt.target, t), d(gen_detached, t));
    ops::scale(gl.L_d, -1.0).backward();
    clamp_grad_norm(dp, opts.grad_lo, opts.grad_hi);
    state.d_opt.step(dp);
    dp.set_requires_grad(false);
    dp.zero_grad();
  }
  ++state.step;
  return b;
}

namespace {

constexpr char kCheckpointMagic[4] = {'L', 'P', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

json checkpoint_header(const TrainState& s, const ModelConfig& model) {
  auto layout = [](const ParameterList& p) {
    json arr = json::array();
    for (const auto& item : p.items()) arr.push_back({{"name", item.name}, {"shape", item.tensor.shape()}});
    return arr;
  };
  auto adam = [](const Adam& a) {
    return json{{"lr", a.options().lr},
                {"beta1", a.options().beta1},
                {"beta2", a.options().beta2},
                {"eps", a.options().eps},
                {"steps", a.steps()}};
  };
  return {{"format", "lipemo-checkpoint"},
          {"version", kCheckpointVersion},
          {"step", s.step},
          {"config_hash", s.config_hash},
          {"masking", to_string(s.masking)},
          {"model", model_to_json(model)},
          {"scorer_fingerprints",
           {{"sync", s.scorer_fingerprints.sync},
            {"emotion", s.scorer_fingerprints.emotion},
            {"affect", s.scorer_fingerprints.affect}}},
          {"generator", layout(s.models.generator.parameters())},
          {"discriminator", layout(s.models.discriminator.parameters())},
          {"g_opt", adam(s.g_opt)},
          {"d_opt", adam(s.d_opt)}};
}

void write_floats(std::ofstream& os, std::span<const real> v) {
  std::vector<float> f(v.begin(), v.end());
  os.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
}

void read_floats(std::ifstream& is, std::span<real> v) {
  std::vector<float> f(v.size());
  is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!is) throw InvalidInput("checkpoint: truncated payload");
  std::copy(f.begin(), f.end(), v.begin());
}

AdamOptions adam_from_json(const json& j) {
  return {j.at("lr").get<double>(), j.at("beta1").get<double>(), j.at("beta2").get<double>(),
          j.at("eps").get<double>()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const ModelConfig& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const json header = checkpoint_header(state, model);
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InvalidInput("cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, 4);
  const std::uint32_t version = kCheckpointVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t len = text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(text.data(), static_cast<std::streamsize>(len));
  const ParameterList gp = state.models.generator.parameters();
  const ParameterList dp = state.models.discriminator.parameters();
  for (const auto& p : gp.items()) write_floats(os, p.tensor.values());
  for (const auto& p : dp.items()) write_floats(os, p.tensor.values());
  for (const Adam* a : {&state.g_opt, &state.d_opt}) {
    for (const auto& m : a->first_moments()) write_floats(os, m);
    for (const auto& v : a->second_moments()) write_floats(os, v);
  }
  if (!os) throw InvalidInput("failed writing checkpoint " + path.string());
  std::ofstream side(path.string() + ".json", std::ios::trunc);
  side << header.dump(2) << '\n';
}

TrainState load_checkpoint(const std::filesystem::path& path, ModelConfig* model_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot read checkpoint " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw InvalidInput(path.string() + ": not a checkpoint");
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kCheckpointVersion)
    throw ConfigError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw InvalidInput(path.string() + ": truncated header");
  const json h = json::parse(text);

  const ModelConfig model = model_from_json(h.at("model"), ModelConfig{});
  const MaskKind masking = parse_mask_kind(h.at("masking"));
  TrainState s = init_state(model, masking, adam_from_json(h.at("g_opt")), 0);
  s.d_opt = Adam(s.models.discriminator.parameters(), adam_from_json(h.at("d_opt")));
  if (s.config_hash != h.at("config_hash").get<std::uint64_t>())
    throw ConfigError(path.string() + ": config hash does not match its model section");
  s.step = h.at("step");
  s.scorer_fingerprints = {h["scorer_fingerprints"].at("sync"), h["scorer_fingerprints"].at("emotion"),
                           h["scorer_fingerprints"].at("affect")};
  ParameterList gp = s.models.generator.parameters();
  ParameterList dp = s.models.discriminator.parameters();
  auto check_layout = [&](const ParameterList& p, const json& j) {
    if (j.size() != p.items().size()) throw ConfigError(path.string() + ": parameter layout differs");
    for (std::size_t i = 0; i < j.size(); ++i)
      if (j[i].at("name") != p.items()[i].name || j[i].at("shape").get<Shape>() != p.items()[i].tensor.shape())
        throw ConfigError(path.string() + ": parameter layout differs at " + p.items()[i].name);
  };
  check_layout(gp, h.at("generator"));
  check_layout(dp, h.at("discriminator"));
  for (auto& p : gp.items()) read_floats(is, p.tensor.values());
  for (auto& p : dp.items()) read_floats(is, p.tensor.values());
  for (Adam* a : {&s.g_opt, &s.d_opt}) {
    for (auto& m : a->first_moments()) read_floats(is, m);
    for (auto& v : a->second_moments()) read_floats(is, v);
  }
  s.g_opt.set_steps(h["g_opt"].at("steps"));
  s.d_opt.set_steps(h["d_opt"].at("steps"));
  if (model_out) *model_out = model;
  return s;
}

Video infer(const Video& input, const Generator& generator, const MaskStrategy& masking, int window,
            const std::vector<int>& boundary) {
  const int f = input.frames.count;
  if (window < 1 || f < window) throw InvalidInput("infer: video shorter than the window");
  if (masking.kind == MaskKind::full && static_cast<int>(input.landmarks.size()) != f)
    throw InvalidInput("infer: full masking needs landmarks for every frame");
  const int spf = input.audio.steps / f;
  if (spf * f != input.audio.steps) throw InvalidInput("infer: audio does not match frames");

  Video out;
  out.fps = input.fps;
  out.steps_per_frame = input.steps_per_frame;
  out.audio = input.audio;
  out.landmarks = input.landmarks;
  out.frames = FrameStack(f, input.frames.height, input.frames.width, input.frames.channels);
  const int nw = f - window + 1;
  const int centre = window / 2;
  const std::size_t fs = input.frames.frame_size();
  constexpr int kChunk = 8;
  NoGradGuard guard;
  for (int w0 = 0; w0 < nw; w0 += kChunk) {
    const int count = std::min(kChunk, nw - w0);
    std::vector<FrameStack> inputs;
    std::vector<Tensor> audio;
    for (int w = w0; w < w0 + count; ++w) {
      const FrameStack win = input.frames.window(w, window);
      std::vector<Landmarks> lms;
      if (!input.landmarks.empty())
        lms.assign(input.landmarks.begin() + w, input.landmarks.begin() + w + window);
      inputs.push_back(build_generator_input(win, win, masking, lms, boundary));
      audio.push_back(audio_to_tensor(input.audio.window(w * spf, window * spf), window));
    }
    std::vector<const FrameStack*> ptrs;
    for (const auto& x : inputs) ptrs.push_back(&x);
    const FrameStack gen = to_frames(generator(to_tensor(stack_frames(ptrs)), concat_rows(audio)));
    for (int k = 0; k < count; ++k) {
      const int w = w0 + k;
      auto copy = [&](int local, int dst) {
        std::copy_n(gen.frame(k * window + local), fs, out.frames.frame(dst));
      };
      copy(centre, w + centre);
      if (w == 0)
        for (int j = 0; j < centre; ++j) copy(j, j);
      if (w == nw - 1)
        for (int j = centre + 1; j < window; ++j) copy(j, w + j);
    }
  }
  return out;
}

ValidationResult validate_variant(const Generator& generator, const Corpus& corpus,
                                  const VariantConfig& variant, const ScorerSet& eval_scorers,
                                  const std::string& split, int max_videos) {
  ValidationResult r;
  const CorpusInfo& info = corpus.info();
  int considered = 0, dv_count = 0;
  for (const auto& key : corpus.keys(split, variant.source)) {
    if (considered >= max_videos) break;
    const UtteranceKey dst_key{key.actor, variant.destination, key.utterance};
    if (!corpus.exists(dst_key)) continue;
    ++considered;
    const Video& src = corpus.video(key);
    const Video& dst = corpus.video(dst_key);
    const Video gen = infer(src, generator, variant.masking, info.window, info.boundary_indices);
    VideoMetrics m = evaluate_video(key.str(), variant.source, variant.destination, gen.frames,
                                    src.audio, src.frames, dst.frames, info.window, eval_scorers);
    if (!m.delta.valence_degenerate) {
      r.delta_valence += m.delta.d_valence;
      ++dv_count;
    }
    r.lse_d += m.lse.lse_d;
    r.videos.push_back(std::move(m));
  }
  if (dv_count > 0) r.delta_valence /= dv_count;
  if (!r.videos.empty()) r.lse_d /= static_cast<double>(r.videos.size());
  return r;
}

double validation_sync_cosine(const TrainState& state, const Corpus& corpus, const ScorerSet& scorers,
                              MaskKind masking, int videos, const std::string& split) {
  const CorpusInfo& info = corpus.info();
  const EmotionLabel neutral{Emotion::neutral, 1};
  double total = 0;
  int windows = 0, used = 0;
  for (const auto& key : corpus.keys(split, neutral)) {
    if (used++ >= videos) break;
    const Video& src = corpus.video(key);
    const Video gen = infer(src, state.models.generator, {masking}, info.window, info.boundary_indices);
    const int t = info.window, nw = gen.frames.count - t + 1;
    const int spf = gen.audio.steps / gen.frames.count;
    std::vector<const FrameStack*> parts;
    std::vector<FrameStack> wins;
    std::vector<Tensor> audio;
    for (int w = 0; w < nw; ++w) {
      wins.push_back(gen.frames.window(w, t));
      audio.push_back(audio_to_tensor(gen.audio.window(w * spf, t * spf), 1));
    }
    for (const auto& x : wins) parts.push_back(&x);
    NoGradGuard guard;
    std::vector<bool> valid;
    auto [v, s] = scorers.sync->embed(to_tensor(stack_frames(parts)), concat_rows(audio), t, valid);
    Tensor cos = ops::cosine_rows(v, s, kCosineEps);
    for (int w = 0; w < nw; ++w) total += valid[w] ? cos[w] : 0.0;
    windows += nw;
  }
  if (windows == 0) throw InvalidInput("no neutral " + split + " videos for sync validation");
  return total / windows;
}

std::string loss_csv_header() { return "step,L_r,E_s,L_g,L_d,L_e,L_total"; }

std::string loss_csv_row(std::int64_t step, const LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(step),
                b.L_r, b.E_s, b.L_g, b.L_d, b.L_e, b.L_total);
  return buf;
}

namespace {

void write_history(const std::filesystem::path& dir, const std::vector<HistoryRow>& h) {
  std::ofstream os(dir / "history.csv", std::ios::trunc);
  os << "step,delta_valence,lse_d,sync_cosine\n";
  char buf[128];
  for (const auto& r : h) {
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step),
                  r.delta_valence, r.lse_d, r.sync_cosine);
    os << buf;
  }
}

struct LoopSpec {
  VariantConfig variant;
  bool pretraining = false;
};

TrainResult run_loop(const TrainConfig& cfg, const LoopSpec& spec, const ProgressFn& progress) {
  cfg.validate();
  Corpus corpus(cfg.corpus);
  const CorpusInfo& info = corpus.info();
  const ModelConfig model = model_config_for(info, cfg.model);
  const VariantConfig& variant = spec.variant;
  for (const auto& e : {variant.source, variant.destination})
    if (!info.has_emotion(e)) throw InvalidInput("corpus has no '" + e.dir_name() + "' videos");

  TrainResult result;
  TrainState& state = result.state;
  if (!cfg.init_checkpoint.empty()) {
    ModelConfig loaded_model;
    state = load_checkpoint(cfg.init_checkpoint, &loaded_model);
    if (state.config_hash != model_config_hash(model, variant.masking.kind))
      throw ConfigError("checkpoint " + cfg.init_checkpoint.string() +
                        " was trained for another model configuration or masking");
    // Fine-tuning starts a fresh optimizer and step counter.
    state.g_opt = Adam(state.models.generator.parameters(), cfg.adam);
    state.d_opt = Adam(state.models.discriminator.parameters(), cfg.adam);
    state.step = 0;
  } else {
    state = init_state(model, variant.masking.kind, cfg.adam, cfg.seed);
  }

  const ScorerSet scorers = make_scorers(corpus, cfg.scorer_backend, cfg.seed);
  const ScorerSet oracle = analytic_scorers(info.norm);
  result.fingerprints_before = fingerprints(scorers);
  state.scorer_fingerprints = result.fingerprints_before;

  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream csv(cfg.out_dir / "losses.csv", std::ios::trunc);
  csv << loss_csv_header() << '\n';

  StepOptions opts;
  opts.weights = variant.effective_weights();
  opts.desired_class = static_cast<int>(variant.destination.name);
  opts.l1_reduction = cfg.l1_reduction;
  opts.grad_lo = cfg.grad_lo;
  opts.grad_hi = cfg.grad_hi;
  opts.dump_dir = cfg.out_dir / "diagnostics";

  double best = -1e300;
  result.last_checkpoint = cfg.out_dir / "last.ckpt";
  result.best_checkpoint = cfg.out_dir / "best.ckpt";
  for (int step = 0; step < cfg.steps; ++step) {
    const Batch batch = assemble_batch(corpus, variant, cfg.batch,
                                       mix_seed({cfg.seed, static_cast<std::uint64_t>(step), 0xBA}));
    if (batch.skipped > 0)
      std::cerr << "warning: step " << step << ": skipped " << batch.skipped
                << " samples with missing paired utterances\n";
    const LossBreakdown b = train_step(state, batch, scorers, opts, info.boundary_indices);
    csv << loss_csv_row(state.step, b) << '\n';
    if (progress) progress(state.step, b);

    if (spec.pretraining) {
      if (cfg.pretrain_check_interval > 0 && (step + 1) % cfg.pretrain_check_interval == 0) {
        HistoryRow row;
        row.step = state.step;
        row.sync_cosine = validation_sync_cosine(state, corpus, oracle, variant.masking.kind,
                                                 std::max(1, cfg.val_videos));
        result.history.push_back(row);
      }
    } else if (cfg.eval_interval > 0 && (step + 1) % cfg.eval_interval == 0) {
      const ValidationResult v = validate_variant(state.models.generator, corpus, variant, oracle,
                                                  "val", std::max(1, cfg.val_videos));
      result.history.push_back({state.step, v.delta_valence, v.lse_d, 0.0});
      if (v.delta_valence > best) {
        best = v.delta_valence;
        save_checkpoint(result.best_checkpoint, state, model);
      }
    }
  }
  csv.flush();
  result.fingerprints_after = fingerprints(scorers);
  if (!(result.fingerprints_after == result.fingerprints_before))
    throw NumericalError("frozen scorer parameters changed during training");
  save_checkpoint(result.last_checkpoint, state, model);
  if (!spec.pretraining && best == -1e300) {
    save_checkpoint(result.best_checkpoint, state, model);
  }
  write_history(cfg.out_dir, result.history);

  if (spec.pretraining) {
    if (result.history.empty() || result.history.back().step != state.step) {
      HistoryRow row;
      row.step = state.step;
      row.sync_cosine = validation_sync_cosine(state, corpus, oracle, variant.masking.kind,
                                               std::max(1, cfg.val_videos));
      result.history.push_back(row);
      write_history(cfg.out_dir, result.history);
    }
    const HistoryRow& row = result.history.back();
    if (row.sync_cosine < cfg.pretrain_sync_target) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", row.sync_cosine);
      throw NumericalError("pretraining did not reach sync cosine " +
                           std::to_string(cfg.pretrain_sync_target) + " (got " + buf +
                           "); loss curve: " + (cfg.out_dir / "losses.csv").string());
    }
    result.best_checkpoint = result.last_checkpoint;
  }
  return result;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const ProgressFn& progress) {
  if (cfg.variant.masking.kind == MaskKind::half && cfg.init_checkpoint.empty())
    throw ConfigError("half masking fine-tunes a pretrained model: run `pretrain` first and pass "
                      "its checkpoint as init_checkpoint");
  return run_loop(cfg, {cfg.variant, false}, progress);
}

TrainResult pretrain(const TrainConfig& cfg, const ProgressFn& progress) {
  const EmotionLabel neutral{Emotion::neutral, 1};
  VariantConfig v = make_variant(MaskKind::half, Strategy::L1, neutral, neutral);
  v.weights = cfg.variant.weights;
  v.weights.s_e = 0.0;
  TrainConfig c = cfg;
  c.init_checkpoint.clear();
  return run_loop(c, {v, true}, progress);
}

}  // namespace lipemo
