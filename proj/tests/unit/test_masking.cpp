#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lipemo/errors.hpp"
#include "lipemo/face_layout.hpp"
#include "lipemo/facegen.hpp"
#include "lipemo/frame_tensor.hpp"
#include "lipemo/masking.hpp"
#include "lipemo/scorers.hpp"

using namespace lipemo;

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool strictly_inside(const Point2& p, const Point2& a, const Point2& b, const Point2& c) {
  const double d1 = cross(a, b, p), d2 = cross(b, c, p), d3 = cross(c, a, p);
  return (d1 > 0 && d2 > 0 && d3 > 0) || (d1 < 0 && d2 < 0 && d3 < 0);
}

// O(n^4) as written, O(n^3) per point: keep a point iff no triangle of other
// points strictly contains it.
std::vector<Point2> brute_force_hull(const std::vector<Point2>& pts) {
  std::vector<Point2> keep;
  const std::size_t n = pts.size();
  for (std::size_t p = 0; p < n; ++p) {
    bool inside = false;
    for (std::size_t i = 0; i < n && !inside; ++i)
      for (std::size_t j = i + 1; j < n && !inside; ++j)
        for (std::size_t k = j + 1; k < n && !inside; ++k)
          if (i != p && j != p && k != p) inside = strictly_inside(pts[p], pts[i], pts[j], pts[k]);
    if (!inside) keep.push_back(pts[p]);
  }
  return keep;
}

std::vector<Point2> random_points(std::mt19937_64& rng, int n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Point2> pts(static_cast<std::size_t>(n));
  for (auto& p : pts) p = {u(rng), u(rng)};
  return pts;
}

bool same_point_set(std::vector<Point2> a, std::vector<Point2> b) {
  auto lt = [](const Point2& p, const Point2& q) { return p.x < q.x || (p.x == q.x && p.y < q.y); };
  std::sort(a.begin(), a.end(), lt);
  std::sort(b.begin(), b.end(), lt);
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].x != b[i].x || a[i].y != b[i].y) return false;
  return true;
}

bool is_convex_ccw(const Polygon& p) {
  const std::size_t n = p.vertices.size();
  for (std::size_t i = 0; i < n; ++i)
    if (cross(p.vertices[i], p.vertices[(i + 1) % n], p.vertices[(i + 2) % n]) <= 0) return false;
  return true;
}

FrameStack random_frames(std::mt19937_64& rng, int n, int h, int w) {
  FrameStack f(n, h, w, 3);
  std::uniform_real_distribution<float> u(0.01f, 1.0f);
  for (float& v : f.data) v = u(rng);
  return f;
}

std::vector<int> ring_indices() {
  std::vector<int> b(layout::kRingPoints);
  std::iota(b.begin(), b.end(), 0);
  return b;
}

}  // namespace

TEST_CASE("hull closed forms") {
  const Polygon tri = convex_hull({{0, 0}, {1, 0}, {0, 1}});
  CHECK(tri.vertices.size() == 3);
  CHECK(tri.area() == doctest::Approx(0.5));
  const Polygon sq = convex_hull({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}});
  CHECK(sq.vertices.size() == 4);
  CHECK(same_point_set(sq.vertices, {{0, 0}, {1, 0}, {1, 1}, {0, 1}}));
  CHECK(sq.perimeter() == doctest::Approx(4.0));
  CHECK_THROWS_AS(convex_hull({{0, 0}, {1, 1}}), InvalidInput);
  CHECK_THROWS_AS(convex_hull({{0, 0}, {1, 1}, {2, 2}, {3, 3}}), InvalidInput);
}

TEST_CASE("hull equals the brute-force oracle on random point sets") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = random_points(rng, 3 + trial % 48, -10, 10);
    const Polygon h = convex_hull(pts);
    CHECK(same_point_set(h.vertices, brute_force_hull(pts)));
    CHECK(is_convex_ccw(h));
    CHECK(h.area() > 0);
  }
}

TEST_CASE("rasterization counts") {
  // Pixel centres 2.5..5.5 in both axes: a 4x4 block.
  const Polygon rect = convex_hull({{2.2, 2.2}, {5.8, 2.2}, {5.8, 5.8}, {2.2, 5.8}});
  const Mask m = rasterize_mask(rect, 10, 10);
  CHECK(m.count() == 16);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) CHECK(m.at(y, x) == (x >= 2 && x <= 5 && y >= 2 && y <= 5));

  const Polygon outside = convex_hull({{20, 20}, {30, 20}, {25, 30}});
  CHECK(rasterize_mask(outside, 10, 10).count() == 0);

  // Centres exactly on edges count as inside.
  const Polygon tight = convex_hull({{2.5, 2.5}, {5.5, 2.5}, {5.5, 5.5}, {2.5, 5.5}});
  CHECK(rasterize_mask(tight, 10, 10).count() == 16);
}

TEST_CASE("rasterized area tracks the shoelace area") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Polygon p = convex_hull(random_points(rng, 12, -5, 45));
    const Mask m = rasterize_mask(p, 40, 40);
    CHECK(m.count() <= 1600);
    // Compare against the polygon clipped to the frame only when fully inside.
    bool inside = true;
    for (const auto& v : p.vertices) inside &= v.x >= 0 && v.x <= 40 && v.y >= 0 && v.y <= 40;
    if (inside) CHECK(std::abs(static_cast<double>(m.count()) - p.area()) <= 2 * p.perimeter());
  }
}

TEST_CASE("hull monotonicity: adding a point never shrinks the mask") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto pts = random_points(rng, 8, 0, 32);
    const std::size_t before = rasterize_mask(convex_hull(pts), 32, 32).count();
    pts.push_back(random_points(rng, 1, -4, 36).front());
    CHECK(rasterize_mask(convex_hull(pts), 32, 32).count() >= before);
  }
}

TEST_CASE("half masking") {
  FrameStack ones(1, 64, 64, 3);
  std::fill(ones.data.begin(), ones.data.end(), 1.0f);
  const FrameStack m = apply_mask(ones, {MaskKind::half}, {}, {});
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c) CHECK(m.at(0, y, x, c) == (y < 32 ? 1.0f : 0.0f));
  FrameStack odd(1, 33, 8, 3);
  std::fill(odd.data.begin(), odd.data.end(), 1.0f);
  const FrameStack mo = apply_mask(odd, {MaskKind::half}, {}, {});
  CHECK(mo.at(0, 15, 0, 0) == 1.0f);
  CHECK(mo.at(0, 16, 0, 0) == 0.0f);
}

TEST_CASE("full masking") {
  FrameStack ones(1, 16, 16, 3);
  std::fill(ones.data.begin(), ones.data.end(), 1.0f);
  const Landmarks cover{{-1, -1}, {17, -1}, {17, 17}, {-1, 17}};
  const FrameStack m = apply_mask(ones, {MaskKind::full}, {cover}, {0, 1, 2, 3});
  CHECK(std::all_of(m.data.begin(), m.data.end(), [](float v) { return v == 0.0f; }));
  CHECK_THROWS_AS(apply_mask(ones, {MaskKind::full}, {}, {0, 1, 2, 3}), InvalidInput);
}

TEST_CASE("mask idempotence and complement preservation on random frames") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const FrameStack f = random_frames(rng, 2, 32, 32);
    std::vector<Landmarks> lms;
    for (int i = 0; i < 2; ++i) lms.push_back(random_points(rng, 10, 2, 30));
    std::vector<int> boundary(10);
    std::iota(boundary.begin(), boundary.end(), 0);
    for (MaskKind kind : {MaskKind::half, MaskKind::full}) {
      const FrameStack once = apply_mask(f, {kind}, lms, boundary);
      const FrameStack twice = apply_mask(once, {kind}, lms, boundary);
      CHECK(once.data == twice.data);
      for (int i = 0; i < 2; ++i) {
        const Mask hull = face_mask(lms[i], boundary, 32, 32);
        for (int y = 0; y < 32; ++y)
          for (int x = 0; x < 32; ++x) {
            const bool masked = kind == MaskKind::half ? y >= 16 : hull.at(y, x);
            for (int c = 0; c < 3; ++c) {
              if (masked)
                CHECK(once.at(i, y, x, c) == 0.0f);
              else
                CHECK(once.at(i, y, x, c) == f.at(i, y, x, c));
            }
          }
      }
    }
  }
}

TEST_CASE("generator input stacks reference and masked pose prior") {
  const Utterance u = synth_utterance(0, 0, {Emotion::happy, 1}, 5, 9);
  const Utterance r = synth_utterance(0, 0, {Emotion::sad, 1}, 5, 9);
  const auto boundary = ring_indices();
  for (MaskKind kind : {MaskKind::half, MaskKind::full}) {
    const FrameStack in = build_generator_input(r.frames, u.frames, {kind}, u.landmarks, boundary);
    CHECK(in.channels == 6);
    CHECK(in.count == 5);
    const FrameStack masked = apply_mask(u.frames, {kind}, u.landmarks, boundary);
    for (int t = 0; t < 5; ++t)
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
          for (int c = 0; c < 3; ++c) {
            CHECK(in.at(t, y, x, c) == r.frames.at(t, y, x, c));
            CHECK(in.at(t, y, x, 3 + c) == masked.at(t, y, x, c));
          }
    if (kind == MaskKind::full) {
      double energy = 0;
      for (int t = 0; t < 5; ++t) {
        const Mask hull = face_mask(u.landmarks[t], boundary, 64, 64);
        for (int y = 0; y < 64; ++y)
          for (int x = 0; x < 64; ++x)
            if (hull.at(y, x))
              for (int c = 0; c < 3; ++c) energy += std::abs(in.at(t, y, x, 3 + c));
      }
      CHECK(energy == 0.0);
    }
  }
  CHECK_THROWS_AS(build_generator_input(r.frames.window(0, 4), u.frames, {MaskKind::half}, {}, {}),
                  InvalidInput);
}

TEST_CASE("full-masked rendered faces are unreadable for the emotion oracle") {
  const auto boundary = ring_indices();
  const AnalyticEmotionScorer scorer(NormStats{});
  for (int actor = 0; actor < 5; ++actor) {
    const Utterance u = synth_utterance(actor, 1, {Emotion::happy, 1}, 5, 3);
    const FrameStack m = apply_mask(u.frames, {MaskKind::full}, u.landmarks, boundary);
    std::vector<bool> found;
    scorer.logits(to_tensor(m), found);
    CHECK(std::none_of(found.begin(), found.end(), [](bool b) { return b; }));
    CHECK_THROWS_AS(emotion_logits(m.window(0, 1), scorer), NoFaceFound);
  }
}
