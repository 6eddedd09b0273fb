#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "lipemo/facegen.hpp"
#include "lipemo/media.hpp"
#include "lipemo/scorers.hpp"

namespace lipemo {

inline constexpr double kDegenerateDelta = 0.05;

struct VideoAffect {
  double v_bar = 0;
  double a_bar = 0;
  int frame_count = 0;  // frames that contributed
  int skipped = 0;      // frames without a detectable face
};

// Mean per-frame affect; frames with no face are skipped and counted.
// Throws NoFaceFound when every frame is skipped.
VideoAffect video_affect(const FrameStack& frames, const AffectScorer& scorer);

struct DeltaScores {
  double d_valence = 0;
  double d_arousal = 0;
  bool valence_degenerate = false;
  bool arousal_degenerate = false;
  bool normalized_for_neutral = false;
};

double neutral_overshoot(double delta);

DeltaScores delta_affect(const VideoAffect& gen, const VideoAffect& src, const VideoAffect& dst,
                         bool dst_is_neutral, double threshold = kDegenerateDelta);

double user_study_delta(double e_g, double e_s, double e_d, bool dst_is_neutral);

struct LseScores {
  double lse_d = 0;
  double lse_c = 0;
  int windows = 0;
  int invalid_windows = 0;
};

// Sliding windows (stride 1) of `window` frames. Windows whose frames hold no
// readable face count as orthogonal embeddings (distance sqrt(2), similarity 0).
LseScores lse_metrics(const FrameStack& frames, const AudioFeatures& audio, int window,
                      const SyncScorer& scorer, int max_offset = 7);

// Frechet distance between Gaussians fitted to the rows of a and b.
double fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double reg = 1e-6);

// Stand-in embedding for FID: greyscale frames average-pooled to 8x8.
inline constexpr int kFidGrid = 8;
Eigen::MatrixXd fid_features(const FrameStack& frames);

struct VideoMetrics {
  std::string video;  // identifier
  EmotionLabel source;
  EmotionLabel destination;
  VideoAffect gen, src, dst;
  DeltaScores delta;
  LseScores lse;
};

// Evaluates one generated video against its source and destination ground truth.
VideoMetrics evaluate_video(const std::string& id, const EmotionLabel& source,
                            const EmotionLabel& destination, const FrameStack& generated,
                            const AudioFeatures& audio, const FrameStack& src_frames,
                            const FrameStack& dst_frames, int window, const ScorerSet& scorers);

struct PairRow {
  std::string pair;  // "sad->happy"
  bool missing = false;
  int videos = 0;
  int valence_count = 0;
  int arousal_count = 0;
  int valence_degenerate = 0;
  int arousal_degenerate = 0;
  double d_valence = 0;
  double d_arousal = 0;
  double lse_d = 0;
  double lse_c = 0;
  double fid = 0;
  bool has_fid = false;
  double baseline_valence = 0;  // mean v_d - v_s
  double baseline_arousal = 0;  // mean a_d - a_s
};

struct MetricReport {
  std::string label;
  std::vector<PairRow> pairs;
  PairRow micro;                      // pooled over every video
  PairRow pair_mean;                  // unweighted mean of per-pair means
  std::optional<double> gt_fid_baseline;
};

struct PairFid {
  std::string pair;
  double value;
};

// Pairs are listed in `pair_order`; pairs with no videos are marked missing.
MetricReport aggregate_report(const std::vector<VideoMetrics>& videos,
                              const std::vector<std::string>& pair_order,
                              const std::vector<PairFid>& fids = {},
                              std::optional<double> micro_fid = std::nullopt);

std::string pair_name(const EmotionLabel& src, const EmotionLabel& dst);
std::vector<std::string> all_pair_names();

std::string report_json(const std::vector<MetricReport>& reports);
// Inverse of report_json.
std::vector<MetricReport> report_from_json(const std::string& text);
std::string report_table(const std::vector<MetricReport>& reports);
std::string report_csv(const std::vector<MetricReport>& reports);

}  // namespace lipemo
