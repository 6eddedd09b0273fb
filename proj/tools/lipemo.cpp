#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <omp.h>

#include "lipemo/corpus.hpp"
#include "lipemo/errors.hpp"
#include "lipemo/eval.hpp"
#include "lipemo/facegen.hpp"
#include "lipemo/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lipemo;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool force = false;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw InvalidInput("cannot read " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw InvalidInput("cannot write " + p.string());
  os << text;
}

json load_config(const Globals& g) {
  if (g.config_path.empty()) return json::object();
  try {
    json j = json::parse(read_text(g.config_path));
    if (!j.is_object()) throw ConfigError(g.config_path + ": top level must be an object");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError(g.config_path + ": " + e.what());
  }
}

json section(const json& cfg, const char* name) {
  return cfg.contains(name) ? cfg[name] : json::object();
}

// Refuses to reuse a populated output directory unless --force is given.
void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw InvalidInput(dir.string() + " exists and is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

struct Manifest {
  explicit Manifest(std::string cmd) : command(std::move(cmd)) {}

  std::string command;
  std::string started = utc_now();
  json resolved;
  std::vector<fs::path> artifacts;

  void write(const Globals& g, const fs::path& out_dir, std::uint64_t seed) const {
    json arts = json::array();
    for (const auto& a : artifacts) {
      if (!fs::exists(a)) throw InvalidInput("manifest artifact missing: " + a.string());
      arts.push_back(a.string());
    }
    json m{{"command", command},
           {"config_path", g.config_path},
           {"config_hash", hex64(fnv1a(resolved.dump()))},
           {"config", resolved},
           {"seed", seed},
           {"output_dir", out_dir.string()},
           {"started", started},
           {"finished", utc_now()},
           {"artifacts", arts}};
    write_text(out_dir / "manifest.json", m.dump(2) + "\n");
  }
};

EmotionLabel parse_label(const std::string& s) {
  const auto pos = s.find('_');
  if (pos == std::string::npos) return {parse_emotion(s), 1};
  return {parse_emotion(s.substr(0, pos)), std::stoi(s.substr(pos + 1))};
}

std::pair<EmotionLabel, EmotionLabel> parse_pair(const std::string& s) {
  const auto pos = s.find(':');
  if (pos == std::string::npos) throw ConfigError("--pair expects source:destination, got '" + s + "'");
  return {parse_label(s.substr(0, pos)), parse_label(s.substr(pos + 1))};
}

// "half:l1_emo" or "full" (strategy defaults to l1_emo).
std::pair<MaskKind, Strategy> parse_variant(const std::string& s) {
  try {
    const auto pos = s.find(':');
    if (pos == std::string::npos) return {parse_mask_kind(s), Strategy::L1_EMO};
    return {parse_mask_kind(s.substr(0, pos)), parse_strategy(s.substr(pos + 1))};
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string(e.what()) + "\nvalid variants (masking:strategy):\n" + pairing_table());
  }
}

// ---- synth ----

struct SynthArgs {
  std::string out;
  std::optional<int> actors, utterances, frames, size;
};

int cmd_synth(const Globals& g, const SynthArgs& a) {
  const json sec = section(load_config(g), "synth");
  CorpusConfig c;
  try {
    c.actors = sec.value("actors", c.actors);
    c.train_actors = sec.value("train_actors", c.train_actors);
    c.val_actors = sec.value("val_actors", c.val_actors);
    c.test_actors = sec.value("test_actors", c.test_actors);
    c.utterances = sec.value("utterances", c.utterances);
    c.frames_per_utterance = sec.value("frames", c.frames_per_utterance);
    c.seed = sec.value("seed", c.seed);
    c.synth.height = sec.value("height", c.synth.height);
    c.synth.width = sec.value("width", c.synth.width);
    c.synth.window = sec.value("window", c.synth.window);
    c.synth.jitter = sec.value("jitter", c.synth.jitter);
    if (sec.contains("emotions")) {
      c.emotions.clear();
      for (const auto& e : sec["emotions"]) c.emotions.push_back(parse_label(e.get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth config: ") + e.what());
  }
  if (a.actors) c.actors = *a.actors;
  if (a.utterances) c.utterances = *a.utterances;
  if (a.frames) c.frames_per_utterance = *a.frames;
  if (a.size) c.synth.height = c.synth.width = *a.size;
  if (g.seed) c.seed = *g.seed;
  if (a.actors && !sec.contains("train_actors")) {
    // Keep the default 8/2/2 proportions for other actor counts.
    c.val_actors = c.test_actors = std::max(1, c.actors / 6);
    c.train_actors = c.actors - c.val_actors - c.test_actors;
  }
  const fs::path out = a.out.empty() ? fs::path(sec.value("out", std::string("corpus"))) : fs::path(a.out);

  prepare_out_dir(out, g.force);
  Manifest m{"synth"};
  std::vector<std::string> emotions;
  for (const auto& e : c.emotions) emotions.push_back(e.dir_name());
  m.resolved = {{"actors", c.actors},
                {"train_actors", c.train_actors},
                {"val_actors", c.val_actors},
                {"test_actors", c.test_actors},
                {"utterances", c.utterances},
                {"frames", c.frames_per_utterance},
                {"height", c.synth.height},
                {"width", c.synth.width},
                {"window", c.synth.window},
                {"jitter", c.synth.jitter},
                {"emotions", emotions},
                {"seed", c.seed}};
  make_corpus(c, out, g.workers);
  m.artifacts = {out / "corpus.json", out / "splits.json"};
  m.write(g, out, c.seed);
  std::cout << "corpus written to " << out.string() << "\n";
  return 0;
}

// ---- pretrain / train ----

struct TrainArgs {
  std::string corpus, out, variant, pair, init, scorer, l1_reduction;
  std::optional<int> steps, batch, eval_interval, val_videos;
  std::optional<double> lr;
};

TrainConfig resolve_train(const Globals& g, const TrainArgs& a, const char* name, json& resolved) {
  TrainConfig c = train_config_from_json(section(load_config(g), name));
  if (!a.corpus.empty()) c.corpus = a.corpus;
  if (!a.out.empty()) c.out_dir = a.out;
  if (!a.init.empty()) c.init_checkpoint = a.init;
  if (!a.scorer.empty()) c.scorer_backend = a.scorer;
  if (!a.l1_reduction.empty()) c.l1_reduction = a.l1_reduction;
  if (a.steps) c.steps = *a.steps;
  if (a.batch) c.batch = *a.batch;
  if (a.eval_interval) c.eval_interval = *a.eval_interval;
  if (a.val_videos) c.val_videos = *a.val_videos;
  if (a.lr) c.adam.lr = *a.lr;
  if (g.seed) c.seed = *g.seed;
  c.workers = g.workers;
  if (!a.variant.empty() || !a.pair.empty()) {
    auto [mask, strategy] = a.variant.empty()
                                ? std::pair{c.variant.masking.kind, c.variant.strategy}
                                : parse_variant(a.variant);
    auto [src, dst] = a.pair.empty() ? std::pair{c.variant.source, c.variant.destination}
                                     : parse_pair(a.pair);
    const LossWeights custom = c.variant.weights;
    const bool had_custom = section(section(load_config(g), name), "variant").contains("weights");
    c.variant = make_variant(mask, strategy, src, dst);
    if (had_custom) c.variant.weights = custom;
  }
  if (c.corpus.empty()) throw ConfigError("no corpus given (--corpus or config)");
  if (c.out_dir.empty()) throw ConfigError("no output directory given (--out or config)");
  c.validate();
  resolved = train_config_to_json(c);
  return c;
}

ProgressFn progress_printer(int total) {
  return [total](std::int64_t step, const LossBreakdown& b) {
    if (step % 50 == 0 || step == total)
      std::cerr << "step " << step << "/" << total << "  " << loss_csv_row(step, b) << "\n";
  };
}

int cmd_pretrain(const Globals& g, const TrainArgs& a) {
  Manifest m{"pretrain"};
  const TrainConfig c = resolve_train(g, a, "pretrain", m.resolved);
  prepare_out_dir(c.out_dir, g.force);
  const TrainResult r = pretrain(c, progress_printer(c.steps));
  m.artifacts = {r.last_checkpoint, c.out_dir / "losses.csv", c.out_dir / "history.csv"};
  m.write(g, c.out_dir, c.seed);
  std::cout << "pretrained checkpoint: " << r.last_checkpoint.string() << " (sync cosine "
            << r.history.back().sync_cosine << ")\n";
  return 0;
}

int cmd_train(const Globals& g, const TrainArgs& a) {
  Manifest m{"train"};
  const TrainConfig c = resolve_train(g, a, "train", m.resolved);
  if (c.variant.masking.kind == MaskKind::half && c.init_checkpoint.empty())
    throw ConfigError("half masking fine-tunes a pretrained generator: run `lipemo pretrain` "
                      "first and pass its checkpoint with --init");
  prepare_out_dir(c.out_dir, g.force);
  write_text(c.out_dir / "config.json", train_config_to_json(c).dump(2) + "\n");
  const TrainResult r = train(c, progress_printer(c.steps));
  m.artifacts = {r.last_checkpoint, r.best_checkpoint, c.out_dir / "losses.csv",
                 c.out_dir / "history.csv", c.out_dir / "config.json"};
  m.write(g, c.out_dir, c.seed);
  for (const auto& h : r.history)
    std::cout << "step " << h.step << "  val dValence " << h.delta_valence << "  LSE-D " << h.lse_d
              << "\n";
  std::cout << "checkpoints: " << r.best_checkpoint.string() << ", " << r.last_checkpoint.string() << "\n";
  return 0;
}

// ---- infer ----

struct InferArgs {
  std::string corpus, checkpoint, out, pair, variant, split;
};

int cmd_infer(const Globals& g, const InferArgs& a) {
  const json sec = section(load_config(g), "infer");
  auto pick = [&](const std::string& flag, const char* key, const std::string& def) {
    return !flag.empty() ? flag : sec.value(key, def);
  };
  const fs::path corpus_dir = pick(a.corpus, "corpus", "");
  const fs::path ckpt = pick(a.checkpoint, "checkpoint", "");
  const fs::path out = pick(a.out, "out", "");
  const std::string split = pick(a.split, "split", "test");
  const auto [src, dst] = parse_pair(pick(a.pair, "pair", "sad:happy"));
  const MaskKind masking = parse_variant(pick(a.variant, "variant", "full")).first;
  if (corpus_dir.empty() || ckpt.empty() || out.empty())
    throw ConfigError("infer needs --corpus, --checkpoint and --out");

  Corpus corpus(corpus_dir);
  const CorpusInfo& info = corpus.info();
  ModelConfig model;
  const TrainState state = load_checkpoint(ckpt, &model);
  const std::uint64_t expected = model_config_hash(model_config_for(info, model), masking);
  if (state.config_hash != expected)
    throw ConfigError("checkpoint " + ckpt.string() + " (config " + hex64(state.config_hash) +
                      ") does not match corpus/variant configuration " + hex64(expected));
  const std::string ckpt_hash = hex64(fnv1a(read_text(ckpt)));

  prepare_out_dir(out, g.force);
  Manifest m{"infer"};
  m.resolved = {{"corpus", corpus_dir.string()},
                {"checkpoint", ckpt.string()},
                {"split", split},
                {"pair", pair_name(src, dst)},
                {"masking", to_string(masking)}};
  int count = 0;
  for (const auto& key : corpus.keys(split, src)) {
    const Video gen = infer(corpus.video(key), state.models.generator, {masking}, info.window,
                            info.boundary_indices);
    const fs::path dir = out / actor_dir(key.actor) / src.dir_name() / utterance_dir(key.utterance);
    write_video(dir, gen);
    const json meta{{"actor", key.actor},
                    {"utterance", key.utterance},
                    {"source", src.dir_name()},
                    {"destination", dst.dir_name()},
                    {"masking", to_string(masking)},
                    {"frames", gen.frames.count},
                    {"fps", gen.fps},
                    {"checkpoint", ckpt.string()},
                    {"checkpoint_hash", ckpt_hash},
                    {"config_hash", hex64(state.config_hash)}};
    write_text(dir / "meta.json", meta.dump(2) + "\n");
    m.artifacts.push_back(dir / "meta.json");
    ++count;
  }
  if (count == 0) throw InvalidInput("no " + src.dir_name() + " videos in split " + split);
  m.write(g, out, 0);
  std::cout << "translated " << count << " videos into " << out.string() << "\n";
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string generated, corpus, out, label, oracle, split;
  bool gt_baseline = false;
};

struct Generated {
  UtteranceKey source_key;
  EmotionLabel destination;
  FrameStack frames;
  AudioFeatures audio;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  const json sec = section(load_config(g), "eval");
  auto pick = [&](const std::string& flag, const char* key, const std::string& def) {
    return !flag.empty() ? flag : sec.value(key, def);
  };
  const fs::path corpus_dir = pick(a.corpus, "corpus", "");
  const fs::path out = pick(a.out, "out", "");
  const std::string oracle = pick(a.oracle, "oracle", "none");
  const std::string split = pick(a.split, "split", "test");
  const fs::path gen_dir = pick(a.generated, "generated", "");
  if (corpus_dir.empty() || out.empty()) throw ConfigError("eval needs --corpus and --out");
  if (oracle != "none" && oracle != "source" && oracle != "destination")
    throw ConfigError("--oracle must be none, source or destination");
  if (oracle == "none" && gen_dir.empty()) throw ConfigError("eval needs --generated (or --oracle)");
  if (!gen_dir.empty() && fs::exists(out) && fs::equivalent(out, gen_dir))
    throw ConfigError("eval --out must differ from --generated");
  const std::string label = pick(a.label, "label", oracle == "none" ? gen_dir.filename().string() : oracle);

  Corpus corpus(corpus_dir);
  const CorpusInfo& info = corpus.info();
  std::vector<Generated> items;
  if (oracle == "none") {
    std::vector<fs::path> metas;
    for (const auto& e : fs::recursive_directory_iterator(gen_dir))
      if (e.path().filename() == "meta.json") metas.push_back(e.path());
    std::sort(metas.begin(), metas.end());
    for (const auto& p : metas) {
      const json meta = json::parse(read_text(p));
      Generated it;
      it.source_key = {meta.at("actor"), parse_label(meta.at("source")), meta.at("utterance")};
      it.destination = parse_label(meta.at("destination"));
      Video v = read_video(p.parent_path());
      it.frames = std::move(v.frames);
      it.audio = std::move(v.audio);
      items.push_back(std::move(it));
    }
    if (items.empty()) throw InvalidInput("no generated videos (meta.json) under " + gen_dir.string());
  } else {
    for (const auto& s : info.emotions)
      for (const auto& d : info.emotions) {
        if (s == d) continue;
        for (const auto& key : corpus.keys(split, s)) {
          const UtteranceKey dk{key.actor, d, key.utterance};
          const UtteranceKey pick_key = oracle == "source" ? key : dk;
          if (!corpus.exists(pick_key)) continue;
          const Video& v = corpus.video(pick_key);
          items.push_back({key, d, v.frames, corpus.video(key).audio});
        }
      }
  }

  const ScorerSet scorers = analytic_scorers(info.norm);
  std::vector<VideoMetrics> metrics;
  std::map<std::string, std::vector<const FrameStack*>> gen_by_pair, dst_by_pair;
  std::vector<std::string> order;
  int missing = 0;
  for (const auto& it : items) {
    const std::string pair = pair_name(it.source_key.emotion, it.destination);
    if (std::find(order.begin(), order.end(), pair) == order.end()) order.push_back(pair);
    const UtteranceKey dk{it.source_key.actor, it.destination, it.source_key.utterance};
    if (!corpus.exists(it.source_key) || !corpus.exists(dk)) {
      std::cerr << "warning: missing ground truth for " << it.source_key.str() << " -> "
                << it.destination.dir_name() << "; pair marked missing\n";
      ++missing;
      continue;
    }
    const Video& src = corpus.video(it.source_key);
    const Video& dst = corpus.video(dk);
    metrics.push_back(evaluate_video(it.source_key.str(), it.source_key.emotion, it.destination,
                                     it.frames, it.audio, src.frames, dst.frames, info.window, scorers));
    gen_by_pair[pair].push_back(&it.frames);
    dst_by_pair[pair].push_back(&dst.frames);
  }

  auto features = [](const std::vector<const FrameStack*>& stacks) {
    std::vector<Eigen::MatrixXd> parts;
    Eigen::Index rows = 0;
    for (const auto* f : stacks) {
      parts.push_back(fid_features(*f));
      rows += parts.back().rows();
    }
    Eigen::MatrixXd out(rows, parts.front().cols());
    Eigen::Index r = 0;
    for (const auto& p : parts) {
      out.middleRows(r, p.rows()) = p;
      r += p.rows();
    }
    return out;
  };
  std::vector<PairFid> fids;
  std::vector<const FrameStack*> all_gen, all_dst;
  for (const auto& pair : order) {
    if (!gen_by_pair.count(pair)) continue;
    fids.push_back({pair, fid(features(gen_by_pair[pair]), features(dst_by_pair[pair]))});
    all_gen.insert(all_gen.end(), gen_by_pair[pair].begin(), gen_by_pair[pair].end());
    all_dst.insert(all_dst.end(), dst_by_pair[pair].begin(), dst_by_pair[pair].end());
  }
  std::optional<double> micro_fid;
  if (!all_gen.empty()) micro_fid = fid(features(all_gen), features(all_dst));
  MetricReport report = aggregate_report(metrics, order, fids, micro_fid);
  report.label = label;
  if (a.gt_baseline || sec.value("gt_baseline", false)) {
    // Mean FID between the ground-truth videos of every pair of emotions.
    std::vector<std::vector<const FrameStack*>> by_emotion;
    for (const auto& e : info.emotions) {
      by_emotion.emplace_back();
      for (const auto& key : corpus.keys(split, e)) by_emotion.back().push_back(&corpus.video(key).frames);
    }
    double sum = 0;
    int n = 0;
    for (std::size_t i = 0; i < by_emotion.size(); ++i)
      for (std::size_t j = i + 1; j < by_emotion.size(); ++j) {
        if (by_emotion[i].empty() || by_emotion[j].empty()) continue;
        sum += fid(features(by_emotion[i]), features(by_emotion[j]));
        ++n;
      }
    if (n > 0) report.gt_fid_baseline = sum / n;
  }

  prepare_out_dir(out, g.force);
  Manifest m{"eval"};
  m.resolved = {{"corpus", corpus_dir.string()},
                {"generated", gen_dir.string()},
                {"oracle", oracle},
                {"split", split},
                {"label", label}};
  write_text(out / "report.json", report_json({report}) + "\n");
  write_text(out / "report.txt", report_table({report}));
  write_text(out / "report.csv", report_csv({report}));
  m.artifacts = {out / "report.json", out / "report.txt", out / "report.csv"};
  m.write(g, out, 0);
  std::cout << report_table({report});
  if (missing > 0) std::cerr << "warning: " << missing << " videos lacked ground truth\n";
  return 0;
}

// ---- report ----

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_report(const Globals& g, const ReportArgs& a) {
  std::vector<MetricReport> all;
  for (const auto& in : a.inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) p /= "report.json";
    auto part = report_from_json(read_text(p));
    all.insert(all.end(), part.begin(), part.end());
  }
  if (all.empty()) throw InvalidInput("report: no metric reports given");
  std::cout << report_table(all);
  if (!a.out.empty()) {
    prepare_out_dir(a.out, g.force);
    Manifest m{"report"};
    m.resolved = {{"inputs", a.inputs}};
    write_text(fs::path(a.out) / "summary.json", report_json(all) + "\n");
    write_text(fs::path(a.out) / "summary.txt", report_table(all));
    write_text(fs::path(a.out) / "summary.csv", report_csv(all));
    m.artifacts = {fs::path(a.out) / "summary.json", fs::path(a.out) / "summary.txt",
                   fs::path(a.out) / "summary.csv"};
    m.write(g, a.out, 0);
  }
  return 0;
}

void add_train_flags(CLI::App* cmd, TrainArgs& a, bool with_variant) {
  cmd->add_option("--corpus", a.corpus, "Corpus directory");
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--steps", a.steps, "Training steps");
  cmd->add_option("--batch", a.batch, "Windows per batch");
  cmd->add_option("--lr", a.lr, "Learning rate");
  cmd->add_option("--val-videos", a.val_videos, "Validation videos per check");
  cmd->add_option("--scorer", a.scorer, "Training scorer backend: analytic or learned");
  cmd->add_option("--l1-reduction", a.l1_reduction, "window_sum or mean");
  if (!with_variant) return;
  cmd->add_option("--variant", a.variant, "masking:strategy, e.g. half:l1_emo");
  cmd->add_option("--pair", a.pair, "source:destination emotions, e.g. sad:happy");
  cmd->add_option("--init", a.init, "Pretrained checkpoint (required for half masking)");
  cmd->add_option("--eval-interval", a.eval_interval, "Steps between validations");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lipemo: emotion-translating talking-face pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config (JSON)");
  app.add_option("--seed", g.seed, "Random seed (overrides config)");
  app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--force", g.force, "Replace existing output directories");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize a paired-emotion corpus");
  synth->add_option("--out", sa.out, "Corpus directory");
  synth->add_option("--actors", sa.actors, "Number of actors");
  synth->add_option("--utterances", sa.utterances, "Utterances per actor and emotion");
  synth->add_option("--frames", sa.frames, "Frames per utterance");
  synth->add_option("--size", sa.size, "Frame height and width");

  TrainArgs pa, ta;
  auto* pre = app.add_subcommand("pretrain", "Pretrain the half-masking generator on neutral speech");
  add_train_flags(pre, pa, false);
  auto* tr = app.add_subcommand("train", "Train one variant for one emotion pair");
  add_train_flags(tr, ta, true);

  InferArgs ia;
  auto* inf = app.add_subcommand("infer", "Translate source-emotion videos with a checkpoint");
  inf->add_option("--corpus", ia.corpus, "Corpus directory");
  inf->add_option("--checkpoint", ia.checkpoint, "Checkpoint file");
  inf->add_option("--out", ia.out, "Output directory");
  inf->add_option("--pair", ia.pair, "source:destination");
  inf->add_option("--variant", ia.variant, "Masking (half or full) of the checkpoint");
  inf->add_option("--split", ia.split, "Corpus split to translate (default test)");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score generated videos against ground truth");
  ev->add_option("--generated", ea.generated, "Directory written by infer");
  ev->add_option("--corpus", ea.corpus, "Corpus directory");
  ev->add_option("--out", ea.out, "Report directory");
  ev->add_option("--label", ea.label, "Report label");
  ev->add_option("--oracle", ea.oracle, "Score corpus videos instead: source or destination");
  ev->add_option("--split", ea.split, "Split used with --oracle (default test)");
  ev->add_flag("--gt-baseline", ea.gt_baseline, "Add the mean ground-truth FID over all emotion pairs");

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Combine metric reports into one table");
  rep->add_option("inputs", ra.inputs, "report.json files or eval directories")->required();
  rep->add_option("--out", ra.out, "Summary directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  omp_set_num_threads(g.workers);
  try {
    if (*synth) return cmd_synth(g, sa);
    if (*pre) return cmd_pretrain(g, pa);
    if (*tr) return cmd_train(g, ta);
    if (*inf) return cmd_infer(g, ia);
    if (*ev) return cmd_eval(g, ea);
    if (*rep) return cmd_report(g, ra);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
