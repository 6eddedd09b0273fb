#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "lipemo/errors.hpp"
#include "lipemo/eval.hpp"
#include "lipemo/facegen.hpp"

using namespace lipemo;

namespace {

// Reads valence and arousal straight from the first pixel of each frame; a zero
// red value means no face.
class PixelAffect : public AffectScorer {
 public:
  Tensor affect(const Tensor& frames, std::vector<bool>& found) const override {
    const int n = frames.dim(0);
    const std::size_t plane = static_cast<std::size_t>(frames.dim(2)) * frames.dim(3);
    std::vector<real> out(static_cast<std::size_t>(n) * 2);
    found.assign(n, false);
    for (int i = 0; i < n; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * 3 * plane;
      found[i] = frames[base] > 0;
      out[i * 2] = frames[base];
      out[i * 2 + 1] = frames[base + plane];
    }
    return Tensor({n, 2}, out);
  }
  std::uint64_t fingerprint() const override { return 1; }
  std::string backend() const override { return "pixel"; }
};

FrameStack pixel_video(const std::vector<std::pair<double, double>>& va) {
  FrameStack f(static_cast<int>(va.size()), 4, 4, 3);
  for (int i = 0; i < f.count; ++i) {
    f.at(i, 0, 0, 0) = static_cast<float>(va[i].first);
    f.at(i, 0, 0, 1) = static_cast<float>(va[i].second);
  }
  return f;
}

VideoAffect affect(double v, double a) {
  VideoAffect x;
  x.v_bar = v;
  x.a_bar = a;
  x.frame_count = 1;
  return x;
}

// Renders a talking face whose mouth follows `open` frame by frame, with audio
// envelope `env` (steps_per_frame steps per frame).
std::pair<FrameStack, AudioFeatures> talking(const std::vector<double>& open,
                                             const std::vector<double>& env, int spf = 4) {
  const int n = static_cast<int>(open.size());
  FrameStack frames(n, 32, 32, 3);
  for (int i = 0; i < n; ++i) {
    FaceParams p;
    p.mouth_open = open[i];
    p.identity_seed = 3;
    const auto r = render_frame(p, 32, 32);
    std::copy_n(r.frame.frame(0), frames.frame_size(), frames.frame(i));
  }
  AudioFeatures audio(static_cast<int>(env.size()) * spf, 8);
  for (int s = 0; s < audio.steps; ++s)
    for (int b = 0; b < audio.bands; ++b) audio.at(s, b) = static_cast<float>(env[s / spf]);
  return {frames, audio};
}

VideoMetrics metric(Emotion s, Emotion d, double dv, double lse, bool degenerate = false) {
  VideoMetrics m;
  m.source = {s, 1};
  m.destination = {d, 1};
  m.delta.d_valence = dv;
  m.delta.d_arousal = dv / 2;
  m.delta.valence_degenerate = degenerate;
  m.lse.lse_d = lse;
  m.lse.lse_c = 1 - lse;
  m.src = affect(-0.5, 0.2);
  m.dst = affect(0.5, 0.6);
  return m;
}

}  // namespace

TEST_CASE("video affect averages found frames and skips the rest") {
  const PixelAffect s;
  const auto v = video_affect(pixel_video({{0.4, 0.1}, {0.4, 0.3}, {0.4, 0.5}}), s);
  CHECK(v.v_bar == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(v.a_bar == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(v.frame_count == 3);
  const auto w = video_affect(pixel_video({{0.2, 0.2}, {0.0, 0.9}, {0.6, 0.4}}), s);
  CHECK(w.v_bar == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(w.a_bar == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(w.skipped == 1);
  CHECK_THROWS_AS(video_affect(pixel_video({{0, 0}, {0, 0}}), s), NoFaceFound);
}

TEST_CASE("delta closed forms") {
  const auto src = affect(-0.5, 0.2), dst = affect(0.5, 0.6);
  auto d = delta_affect(affect(0.5, 0.6), src, dst, false);
  CHECK(d.d_valence == doctest::Approx(1.0));
  CHECK(d.d_arousal == doctest::Approx(1.0));
  d = delta_affect(affect(-0.5, 0.2), src, dst, false);
  CHECK(d.d_valence == doctest::Approx(0.0));
  d = delta_affect(affect(0.0, 0.4), src, dst, false);
  CHECK(d.d_valence == doctest::Approx(0.5));
  CHECK(d.d_arousal == doctest::Approx(0.5));
  // Overshoot past a non-neutral target is reported as is.
  d = delta_affect(affect(1.0, 0.6), src, dst, false);
  CHECK(d.d_valence == doctest::Approx(1.5));
  // Toward neutral, overshoot is folded back: 1.5 -> 0.5, 0.5 -> 0.5.
  d = delta_affect(affect(1.0, 0.4), src, dst, true);
  CHECK(d.d_valence == doctest::Approx(0.5));
  CHECK(d.d_arousal == doctest::Approx(0.5));
  CHECK(d.normalized_for_neutral);
  CHECK(neutral_overshoot(1.0) == doctest::Approx(1.0));
  CHECK(neutral_overshoot(2.0) == doctest::Approx(0.0));
  CHECK(neutral_overshoot(0.25) == doctest::Approx(0.25));
}

TEST_CASE("delta flags degenerate pairs") {
  const auto d = delta_affect(affect(0.3, 0.5), affect(0.1, 0.2), affect(0.12, 0.6), false);
  CHECK(d.valence_degenerate);
  CHECK(d.d_valence == 0.0);
  CHECK_FALSE(d.arousal_degenerate);
  CHECK(d.d_arousal == doctest::Approx(0.75));
}

TEST_CASE("property: delta is invariant to affine rescaling of the scorer") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1), scale(0.1, 5);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const double g = u(rng), s = u(rng), t = u(rng);
    if (std::abs(t - s) < 0.1) continue;
    const double a = scale(rng) * (u(rng) < 0 ? -1 : 1), b = u(rng) * 3;
    for (bool neutral : {false, true}) {
      const double base =
          delta_affect(affect(g, 0), affect(s, 0), affect(t, 0), neutral, 0).d_valence;
      const double moved =
          delta_affect(affect(a * g + b, 0), affect(a * s + b, 0), affect(a * t + b, 0), neutral, 0)
              .d_valence;
      CHECK(std::abs(base - moved) <= 1e-9 * std::max(1.0, std::abs(base)));
    }
    ++checked;
  }
  CHECK(checked > 800);
}

TEST_CASE("user study delta") {
  CHECK(user_study_delta(4, 2, 4, false) == doctest::Approx(1.0));
  CHECK(user_study_delta(3, 2, 4, false) == doctest::Approx(0.5));
  CHECK(user_study_delta(5, 1, 3, true) == doctest::Approx(0.0));
  CHECK_THROWS_AS(user_study_delta(3, 2, 2, false), InvalidInput);
}

TEST_CASE("fid of a set with itself is zero") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  Eigen::MatrixXd a(50, 6);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = n(rng);
  CHECK(fid(a, a) <= 1e-9);
}

TEST_CASE("property: one-dimensional fid matches the closed form") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0, 1);
  std::uniform_int_distribution<int> size(3, 40);
  const double reg = 1e-6;
  for (int c = 0; c < 100; ++c) {
    const int na = size(rng), nb = size(rng);
    Eigen::MatrixXd a(na, 1), b(nb, 1);
    const double sa = std::exp(n(rng)), sb = std::exp(n(rng)), mb = 3 * n(rng);
    for (int i = 0; i < na; ++i) a(i, 0) = sa * n(rng);
    for (int i = 0; i < nb; ++i) b(i, 0) = mb + sb * n(rng);
    auto stats = [](const Eigen::MatrixXd& x, double& mu, double& var) {
      mu = x.mean();
      var = (x.array() - mu).square().sum() / static_cast<double>(x.rows() - 1);
    };
    double m1, v1, m2, v2;
    stats(a, m1, v1);
    stats(b, m2, v2);
    const double want = (m1 - m2) * (m1 - m2) +
                        std::pow(std::sqrt(v1 + reg) - std::sqrt(v2 + reg), 2);
    CHECK(std::abs(fid(a, b, reg) - want) <= 1e-6 * std::max(1.0, want));
  }
}

TEST_CASE("fid rejects too few samples and mismatched dimensions") {
  CHECK_THROWS_AS(fid(Eigen::MatrixXd::Zero(3, 3), Eigen::MatrixXd::Zero(10, 3)), InvalidInput);
  CHECK_THROWS_AS(fid(Eigen::MatrixXd::Zero(10, 3), Eigen::MatrixXd::Zero(10, 2)), InvalidInput);
}

TEST_CASE("fid features pool grey to the grid") {
  FrameStack f(2, 16, 16, 3);
  std::fill(f.data.begin(), f.data.begin() + static_cast<long>(f.frame_size()), 0.5f);
  const auto x = fid_features(f);
  CHECK(x.rows() == 2);
  CHECK(x.cols() == kFidGrid * kFidGrid);
  CHECK(x.row(0).minCoeff() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(x.row(0).maxCoeff() == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(x.row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lse: synchronized speech scores better than shifted speech") {
  const int n = 48, skip = 8;
  const auto env = speech_envelope(1, 2, n, 7);
  const auto sync = analytic_scorers(NormStats{});
  auto [frames, audio_full] = talking(env, env);
  const FrameStack video = frames.window(skip, n - 2 * skip);
  std::vector<double> d;
  for (int shift : {0, 2, 4}) {
    const AudioFeatures audio = audio_full.window((skip + shift) * 4, (n - 2 * skip) * 4);
    const auto l = lse_metrics(video, audio, 5, *sync.sync);
    CHECK(l.invalid_windows == 0);
    CHECK(l.windows == n - 2 * skip - 4);
    d.push_back(l.lse_d);
    if (shift == 0) CHECK(l.lse_c > 0);
  }
  CHECK(d[0] < d[1]);
  CHECK(d[1] <= d[2] + 1e-6);
}

TEST_CASE("lse: constant video and audio carry no sync confidence") {
  const std::vector<double> still(20, 0.3);
  auto [frames, audio] = talking(still, still);
  const auto s = analytic_scorers(NormStats{});
  const auto l = lse_metrics(frames, audio, 5, *s.sync);
  CHECK(std::abs(l.lse_c) <= 1e-6);
}

TEST_CASE("lse: windows without a face count as orthogonal") {
  FrameStack blank(10, 32, 32, 3);
  AudioFeatures audio(40, 8);
  const auto s = analytic_scorers(NormStats{});
  const auto l = lse_metrics(blank, audio, 5, *s.sync);
  CHECK(l.invalid_windows == l.windows);
  CHECK(l.lse_d == doctest::Approx(std::sqrt(2.0)));
  CHECK(l.lse_c == 0.0);
  CHECK_THROWS_AS(lse_metrics(blank.window(0, 3), audio.window(0, 12), 5, *s.sync), InvalidInput);
}

TEST_CASE("aggregate: pooled and pair-mean averages") {
  const std::vector<VideoMetrics> vids{
      metric(Emotion::sad, Emotion::happy, 1.0, 0.2), metric(Emotion::sad, Emotion::happy, 0.5, 0.4),
      metric(Emotion::sad, Emotion::happy, 0.0, 0.6), metric(Emotion::happy, Emotion::sad, 0.2, 1.0),
      metric(Emotion::happy, Emotion::sad, 9.0, 1.0, true)};
  const auto r = aggregate_report(vids, all_pair_names(), {{"sad->happy", 2.0}}, 3.0);
  REQUIRE(r.pairs.size() == 6);
  int missing = 0;
  for (const auto& row : r.pairs) {
    missing += row.missing;
    if (row.pair == "sad->happy") {
      CHECK(row.videos == 3);
      CHECK(row.d_valence == doctest::Approx(0.5));
      CHECK(row.lse_d == doctest::Approx(0.4));
      CHECK(row.has_fid);
      CHECK(row.fid == 2.0);
    }
    if (row.pair == "happy->sad") {
      CHECK(row.valence_count == 1);
      CHECK(row.valence_degenerate == 1);
      CHECK(row.d_valence == doctest::Approx(0.2));
      CHECK(row.lse_d == doctest::Approx(1.0));
    }
  }
  CHECK(missing == 4);
  // Pooled valence: weighted by non-degenerate counts.
  CHECK(r.micro.d_valence == doctest::Approx((1.0 + 0.5 + 0.0 + 0.2) / 4));
  CHECK(r.micro.lse_d == doctest::Approx((0.2 + 0.4 + 0.6 + 1.0 + 1.0) / 5));
  CHECK(r.micro.fid == 3.0);
  CHECK(r.pair_mean.d_valence == doctest::Approx((0.5 + 0.2) / 2));
  CHECK(r.pair_mean.lse_d == doctest::Approx((0.4 + 1.0) / 2));
  CHECK(r.pair_mean.fid == 2.0);
}

TEST_CASE("property: pooled mean equals count-weighted pair means") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1, 2);
  const auto names = all_pair_names();
  const Emotion es[] = {Emotion::happy, Emotion::neutral, Emotion::sad};
  for (int c = 0; c < 50; ++c) {
    std::vector<VideoMetrics> vids;
    const int n = 1 + static_cast<int>(rng() % 30);
    for (int i = 0; i < n; ++i) {
      const Emotion s = es[rng() % 3];
      Emotion d = es[rng() % 3];
      if (d == s) d = es[(static_cast<int>(s) + 1) % 3];
      vids.push_back(metric(s, d, u(rng), u(rng)));
    }
    const auto r = aggregate_report(vids, names);
    double weighted = 0;
    for (const auto& row : r.pairs)
      if (!row.missing) weighted += row.d_valence * row.valence_count;
    CHECK(r.micro.d_valence == doctest::Approx(weighted / r.micro.valence_count).epsilon(1e-9));
    CHECK(r.micro.videos == n);
  }
}

TEST_CASE("report json round trip and renderers") {
  const std::vector<VideoMetrics> vids{metric(Emotion::sad, Emotion::happy, 0.8, 0.3),
                                       metric(Emotion::neutral, Emotion::sad, 0.6, 0.5)};
  auto r = aggregate_report(vids, all_pair_names(), {{"sad->happy", 1.25}}, 4.5);
  r.label = "L1";
  r.gt_fid_baseline = 0.75;
  const std::string text = report_json({r});
  const auto back = report_from_json(text);
  REQUIRE(back.size() == 1);
  CHECK(report_json(back) == text);
  CHECK(back[0].label == "L1");
  CHECK(back[0].gt_fid_baseline.value() == 0.75);
  CHECK(report_table({r}).find("sad->happy") != std::string::npos);
  CHECK(report_csv({r}).find("L1") != std::string::npos);
  CHECK_THROWS_AS(report_from_json("{not json"), InvalidInput);
}
