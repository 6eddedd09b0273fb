#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fd.hpp"
#include "lipemo/errors.hpp"
#include "lipemo/facegen.hpp"
#include "lipemo/frame_tensor.hpp"
#include "lipemo/ops.hpp"
#include "lipemo/scorers.hpp"

using namespace lipemo;

namespace {

const NormStats kNorm{};

FrameStack render(double curve, double brow, double open, std::uint64_t id, int size = 64) {
  FaceParams p;
  p.mouth_curve = curve;
  p.brow_angle = brow;
  p.mouth_open = open;
  p.identity_seed = id;
  return render_frame(p, size, size).frame;
}

double norm2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("analytic emotion logits invert the renderer") {
  const AnalyticEmotionScorer s(kNorm);
  for (std::uint64_t id = 0; id < 12; ++id) {
    const auto happy = emotion_params({Emotion::happy, 1});
    const auto sad = emotion_params({Emotion::sad, 1});
    CHECK(emotion_logits(render(0, 0, 0.3, id), s).argmax() == static_cast<int>(Emotion::neutral));
    CHECK(emotion_logits(render(happy.mouth_curve, happy.brow_angle, 0.3, id), s).argmax() ==
          static_cast<int>(Emotion::happy));
    CHECK(emotion_logits(render(sad.mouth_curve, sad.brow_angle, 0.3, id), s).argmax() ==
          static_cast<int>(Emotion::sad));
  }
  FrameStack black(1, 64, 64, 3);
  CHECK_THROWS_AS(emotion_logits(black, s), NoFaceFound);
  const AnalyticAffectScorer a(kNorm);
  CHECK_THROWS_AS(affect_score(black, a), NoFaceFound);
}

TEST_CASE("analytic affect ordering and symmetry") {
  const AnalyticAffectScorer s(kNorm);
  const auto h = emotion_params({Emotion::happy, 1});
  for (std::uint64_t id = 0; id < 12; ++id) {
    const AffectScore n = affect_score(render(0, 0, 0.2, id), s);
    const AffectScore hp = affect_score(render(h.mouth_curve, h.brow_angle, 0.2, id), s);
    const AffectScore sd = affect_score(render(-h.mouth_curve, -h.brow_angle, 0.2, id), s);
    CHECK(std::abs(n.valence) <= 0.05);
    CHECK(hp.valence > n.valence);
    CHECK(n.valence > sd.valence);
    CHECK(std::abs(hp.valence + sd.valence) <= 0.05);
    for (const auto& a : {n, hp, sd}) {
      CHECK(a.valence >= -1);
      CHECK(a.valence <= 1);
      CHECK(a.arousal >= 0);
      CHECK(a.arousal <= 1);
    }
  }
}

TEST_CASE("analytic valence error stays within three jitter amplitudes") {
  const AnalyticAffectScorer s(kNorm);
  Rng rng(99);
  double worst = 0;
  for (int i = 0; i < 300; ++i) {
    const double curve = 2 * rng.uniform() - 1, brow = 2 * rng.uniform() - 1, open = rng.uniform();
    const double truth = std::clamp(0.8 * curve + 0.2 * brow, -1.0, 1.0);
    const AffectScore a = affect_score(render(curve, brow, open, rng.next()), s);
    worst = std::max(worst, std::abs(a.valence - truth));
  }
  MESSAGE("worst valence error " << worst);
  CHECK(worst <= 3 * SynthConfig{}.jitter);
}

TEST_CASE("analytic sync embeddings") {
  const AnalyticSyncScorer s(kNorm);
  const Utterance u = synth_utterance(2, 1, {Emotion::sad, 1}, 40, 3);
  const int t = 5, spf = u.steps_per_frame;
  for (int start = 4; start + t + 4 <= 40; start += 5) {
    const FrameStack win = u.frames.window(start, t);
    const SyncEmbeddingPair aligned = sync_embed(win, u.audio.window(start * spf, t * spf), s);
    CHECK(aligned.dim() == 32);
    CHECK(norm2(aligned.v) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(norm2(aligned.s) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(aligned.cosine() >= 0.99);
    const SyncEmbeddingPair shifted = sync_embed(win, u.audio.window(start * spf + 4, t * spf), s);
    CHECK(shifted.cosine() < aligned.cosine());
  }
  CHECK_THROWS_AS(sync_embed(u.frames.window(0, t), u.audio.window(0, t * spf - 1), s), InvalidInput);
}

TEST_CASE("analytic scorers expose gradients to the frames") {
  const AnalyticAffectScorer s(kNorm);
  const auto h = emotion_params({Emotion::happy, 1});
  Tensor x = to_tensor(render(h.mouth_curve, h.brow_angle, 0.4, 5, 32));
  std::vector<bool> found;
  x.set_requires_grad(true);
  Tensor v = ops::select_col(s.affect(x, found), 0);
  REQUIRE(found[0]);
  v.backward();
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x.grad()[i] != 0) active.push_back(i);
  CHECK(!active.empty());
  // Finite differences at the pixels that carry gradient.
  NoGradGuard guard;
  int checked = 0;
  for (std::size_t k = 0; k < active.size() && checked < 40; k += std::max<std::size_t>(1, active.size() / 40)) {
    const std::size_t i = active[k];
    const real saved = x.values()[i];
    const double hstep = 1e-6;
    x.values()[i] = saved + hstep;
    const double fp = ops::select_col(s.affect(x, found), 0).item();
    x.values()[i] = saved - hstep;
    const double fm = ops::select_col(s.affect(x, found), 0).item();
    x.values()[i] = saved;
    const double num = (fp - fm) / (2 * hstep);
    CHECK(std::abs(num - x.grad()[i]) <= 1e-3 * std::max({std::abs(num), std::abs(x.grad()[i]), 1e-3}));
    ++checked;
  }
}

TEST_CASE("fingerprints") {
  const ScorerSet a = analytic_scorers(kNorm);
  CHECK(freeze_check(*a.sync) == kAnalyticFingerprint);
  CHECK(freeze_check(*a.emotion) == kAnalyticFingerprint);
  const LearnedEmotionScorer e1(kNorm, 1), e2(kNorm, 2), e1b(kNorm, 1);
  CHECK(e1.fingerprint() != e2.fingerprint());
  CHECK(e1.fingerprint() == e1b.fingerprint());
  const LearnedAffectScorer a1(kNorm, 1), a2(kNorm, 2);
  CHECK(a1.fingerprint() != a2.fingerprint());
  const LearnedSyncScorer s1(kNorm, 5, 4, 16, 32, 1), s2(kNorm, 5, 4, 16, 32, 2);
  CHECK(s1.fingerprint() != s2.fingerprint());
}

TEST_CASE("learned emotion scorer fits the synthetic classes and stays frozen afterwards") {
  std::vector<const FrameStack*> parts;
  std::vector<FrameStack> frames;
  std::vector<int> labels;
  for (int id = 0; id < 30; ++id)
    for (Emotion e : {Emotion::happy, Emotion::neutral, Emotion::sad}) {
      const auto d = emotion_params({e, 1});
      frames.push_back(render(d.mouth_curve, d.brow_angle, 0.1 * (id % 8), static_cast<std::uint64_t>(id), 32));
      labels.push_back(static_cast<int>(e));
    }
  FrameStack all(static_cast<int>(frames.size()), 32, 32, 3);
  for (std::size_t i = 0; i < frames.size(); ++i)
    std::copy(frames[i].data.begin(), frames[i].data.end(), all.frame(static_cast<int>(i)));
  const Tensor x = to_tensor(all);
  LearnedEmotionScorer s(kNorm, 3);
  ScorerFitOptions opts;
  opts.steps = 150;
  opts.lr = 3e-3;
  const double loss = s.fit(x, labels, opts);
  CHECK(loss < 0.7);
  const std::uint64_t fp = s.fingerprint();
  for (const auto& p : s.parameters().items()) CHECK_FALSE(p.tensor.requires_grad());
  std::vector<bool> found;
  Tensor z = s.logits(x, found);
  int correct = 0;
  for (int i = 0; i < x.dim(0); ++i) {
    int best = 0;
    for (int k = 1; k < 3; ++k)
      if (z[i * 3 + k] > z[i * 3 + best]) best = k;
    correct += best == labels[i];
  }
  CHECK(correct >= 0.8 * x.dim(0));
  CHECK(s.fingerprint() == fp);
  FrameStack black(1, 32, 32, 3);
  s.logits(to_tensor(black), found);
  CHECK_FALSE(found[0]);
}
