#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "lipemo/corpus.hpp"
#include "lipemo/eval.hpp"
#include "lipemo/facegen.hpp"
#include "lipemo/losses.hpp"
#include "lipemo/masking.hpp"
#include "lipemo/model.hpp"
#include "lipemo/scorers.hpp"

namespace lipemo {

enum class Strategy { L1, EMO, L1_EMO };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

struct VariantConfig {
  MaskStrategy masking;
  Strategy strategy = Strategy::L1_EMO;
  LossWeights weights;
  EmotionLabel source{Emotion::sad, 1};
  EmotionLabel destination{Emotion::happy, 1};

  // Weights actually optimized: strategy L1 drops the emotion objective.
  LossWeights effective_weights() const;
  std::string name() const;  // "half:l1_emo"
  void validate() const;
};

// Default weights for the strategy.
VariantConfig make_variant(MaskKind masking, Strategy strategy, const EmotionLabel& source,
                           const EmotionLabel& destination);

// Pose-prior and target emotions for a variant (the pairing table).
EmotionLabel pose_prior_emotion(const VariantConfig& v);
EmotionLabel target_emotion(const VariantConfig& v);
std::string pairing_table();

struct TrainingSample {
  UtteranceKey reference_key;
  UtteranceKey pose_key;
  UtteranceKey target_key;
  int reference_start = 0;
  int start = 0;  // window start shared by pose prior, target and audio
  FrameStack reference;
  FrameStack pose_source;
  std::vector<Landmarks> pose_landmarks;
  FrameStack target;
  AudioFeatures audio;
  EmotionLabel source;
  EmotionLabel destination;
};

struct Batch {
  std::vector<TrainingSample> samples;
  int skipped = 0;
};

// Draws `batch_size` windows from the training split. Samples whose paired
// utterance is missing are skipped (and counted).
Batch assemble_batch(const Corpus& corpus, const VariantConfig& variant, int batch_size,
                     std::uint64_t seed, const std::string& split = "train");

struct TrainConfig {
  std::filesystem::path corpus;
  std::filesystem::path out_dir;
  VariantConfig variant;
  ModelConfig model;
  int steps = 2000;
  int batch = 4;
  int eval_interval = 500;
  AdamOptions adam;
  std::uint64_t seed = 1;
  std::string scorer_backend = "analytic";  // objectives used for training
  std::string l1_reduction = "window_sum";  // or "mean"
  double grad_lo = 1e-2;
  double grad_hi = 1e10;
  int workers = 1;
  std::filesystem::path init_checkpoint;  // pretrained start for half masking
  int val_videos = 4;                     // per validation pass
  // Pretraining only: runs every step, logs the sync cosine each interval and
  // fails if the final value misses the target.
  double pretrain_sync_target = 0.9;
  int pretrain_check_interval = 250;

  void validate() const;
};

// Config sections; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json train_config_to_json(const TrainConfig& c);
// Hash of everything that fixes the network layout and its input convention.
std::uint64_t model_config_hash(const ModelConfig& m, MaskKind masking);

ModelConfig model_config_for(const CorpusInfo& info, ModelConfig base = {});

struct ScorerFingerprints {
  std::uint64_t sync = 0;
  std::uint64_t emotion = 0;
  std::uint64_t affect = 0;
  bool operator==(const ScorerFingerprints&) const = default;
};

ScorerFingerprints fingerprints(const ScorerSet& s);

// Builds the scorer set used as frozen training objectives. Learned backends
// are fitted on the training split here and frozen.
ScorerSet make_scorers(const Corpus& corpus, const std::string& backend, std::uint64_t seed);

struct TrainState {
  Models models;
  Adam g_opt;
  Adam d_opt;
  std::int64_t step = 0;
  std::uint64_t config_hash = 0;
  MaskKind masking = MaskKind::half;
  ScorerFingerprints scorer_fingerprints;
};

TrainState init_state(const ModelConfig& model, MaskKind masking, const AdamOptions& adam,
                      std::uint64_t seed);

struct StepOptions {
  LossWeights weights;
  int desired_class = 0;  // emotion objective target
  std::string l1_reduction = "window_sum";
  double grad_lo = 1e-2;
  double grad_hi = 1e10;
  std::filesystem::path dump_dir;  // diagnostics for non-finite losses
};

LossBreakdown train_step(TrainState& state, const Batch& batch, const ScorerSet& scorers,
                         const StepOptions& opts, const std::vector<int>& boundary);

// Checkpoint: binary container (magic "LPCK", version, JSON header, float32
// payload) plus a "<path>.json" metadata sidecar.
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const ModelConfig& model);
TrainState load_checkpoint(const std::filesystem::path& path, ModelConfig* model = nullptr);

struct HistoryRow {
  std::int64_t step = 0;
  double delta_valence = 0;
  double lse_d = 0;
  double sync_cosine = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<HistoryRow> history;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  ScorerFingerprints fingerprints_before;
  ScorerFingerprints fingerprints_after;
};

using ProgressFn = std::function<void(std::int64_t step, const LossBreakdown&)>;

TrainResult train(const TrainConfig& cfg, const ProgressFn& progress = {});
// Neutral-only pretraining with sync, L1 and quality objectives.
TrainResult pretrain(const TrainConfig& cfg, const ProgressFn& progress = {});

// Mean analytic sync cosine of generated neutral windows on the split.
double validation_sync_cosine(const TrainState& state, const Corpus& corpus,
                              const ScorerSet& scorers, MaskKind masking, int videos,
                              const std::string& split = "val");

// Translates a whole video: every sliding window is generated from (the
// input window as reference, the masked input as pose prior, the input audio)
// and the centre frame is kept; the first/last windows also fill the edges.
Video infer(const Video& input, const Generator& generator, const MaskStrategy& masking,
            int window, const std::vector<int>& boundary);

struct ValidationResult {
  double delta_valence = 0;
  double lse_d = 0;
  std::vector<VideoMetrics> videos;
};

ValidationResult validate_variant(const Generator& generator, const Corpus& corpus,
                                  const VariantConfig& variant, const ScorerSet& eval_scorers,
                                  const std::string& split, int max_videos);

std::string loss_csv_header();
std::string loss_csv_row(std::int64_t step, const LossBreakdown& b);

}  // namespace lipemo
