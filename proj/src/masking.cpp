#include "lipemo/masking.hpp"

#include <algorithm>
#include <cmath>

#include "lipemo/errors.hpp"

namespace lipemo {

std::string to_string(MaskKind k) { return k == MaskKind::half ? "half" : "full"; }

MaskKind parse_mask_kind(const std::string& name) {
  if (name == "half") return MaskKind::half;
  if (name == "full") return MaskKind::full;
  throw InvalidInput("unknown mask kind '" + name + "'");
}

namespace {

double cross(const Point2& o, const Point2& a, const Point2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace

double Polygon::area() const {
  double acc = 0;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = vertices[i];
    const Point2& b = vertices[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

double Polygon::perimeter() const {
  double acc = 0;
  const std::size_t n = vertices.size();
  for (std::size_t i = 0; i < n; ++i)
    acc += std::hypot(vertices[(i + 1) % n].x - vertices[i].x, vertices[(i + 1) % n].y - vertices[i].y);
  return acc;
}

Polygon convex_hull(const std::vector<Point2>& points) {
  if (points.size() < 3) throw InvalidInput("convex hull needs at least 3 points");
  std::vector<Point2> p = points;
  for (const auto& q : p)
    if (!std::isfinite(q.x) || !std::isfinite(q.y)) throw InvalidInput("non-finite hull point");
  std::sort(p.begin(), p.end(), [](const Point2& a, const Point2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  p.erase(std::unique(p.begin(), p.end(),
                      [](const Point2& a, const Point2& b) { return a.x == b.x && a.y == b.y; }),
          p.end());
  const std::size_t n = p.size();
  std::vector<Point2> h(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = n - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k > 0 ? k - 1 : 0);
  if (h.size() < 3) throw InvalidInput("convex hull of collinear points");
  return Polygon{std::move(h)};
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Mask rasterize_mask(const Polygon& poly, int height, int width) {
  if (poly.vertices.size() < 3) throw InvalidInput("polygon needs at least 3 vertices");
  if (height <= 0 || width <= 0) throw InvalidInput("mask size must be positive");
  Mask m{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
  const auto& v = poly.vertices;
  const std::size_t n = v.size();
  const double sign = poly.area() >= 0 ? 1.0 : -1.0;
  double x0 = v[0].x, x1 = v[0].x, y0 = v[0].y, y1 = v[0].y;
  for (const auto& q : v) {
    x0 = std::min(x0, q.x);
    x1 = std::max(x1, q.x);
    y0 = std::min(y0, q.y);
    y1 = std::max(y1, q.y);
  }
  const int ya = std::max(0, static_cast<int>(std::floor(y0 - 0.5)));
  const int yb = std::min(height - 1, static_cast<int>(std::ceil(y1 - 0.5)));
  const int xa = std::max(0, static_cast<int>(std::floor(x0 - 0.5)));
  const int xb = std::min(width - 1, static_cast<int>(std::ceil(x1 - 0.5)));
  for (int y = ya; y <= yb; ++y)
    for (int x = xa; x <= xb; ++x) {
      const Point2 c{x + 0.5, y + 0.5};
      bool inside = true;
      for (std::size_t i = 0; i < n && inside; ++i)
        if (sign * cross(v[i], v[(i + 1) % n], c) < 0) inside = false;
      if (inside) m.bits[static_cast<std::size_t>(y) * width + x] = 1;
    }
  return m;
}

Mask face_mask(const Landmarks& landmarks, const std::vector<int>& boundary, int height, int width) {
  std::vector<Point2> pts;
  pts.reserve(boundary.size());
  for (int i : boundary) {
    if (i < 0 || i >= static_cast<int>(landmarks.size()))
      throw InvalidInput("boundary landmark index " + std::to_string(i) + " out of range");
    pts.push_back(landmarks[i]);
  }
  return rasterize_mask(convex_hull(pts), height, width);
}

FrameStack apply_mask(const FrameStack& frames, const MaskStrategy& strategy,
                      const std::vector<Landmarks>& landmarks, const std::vector<int>& boundary) {
  FrameStack out = frames;
  const int h = frames.height, w = frames.width, c = frames.channels;
  if (strategy.kind == MaskKind::half) {
    const std::size_t row = static_cast<std::size_t>(w) * c;
    for (int i = 0; i < frames.count; ++i)
      std::fill(out.frame(i) + (h / 2) * row, out.frame(i) + h * row, 0.0f);
    return out;
  }
  if (static_cast<int>(landmarks.size()) != frames.count)
    throw InvalidInput("full masking needs landmarks for every frame");
  for (int i = 0; i < frames.count; ++i) {
    const Mask m = face_mask(landmarks[i], boundary, h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (m.at(y, x))
          for (int k = 0; k < c; ++k) out.at(i, y, x, k) = 0.0f;
  }
  return out;
}

FrameStack build_generator_input(const FrameStack& reference, const FrameStack& pose_source,
                                 const MaskStrategy& strategy,
                                 const std::vector<Landmarks>& pose_landmarks,
                                 const std::vector<int>& boundary) {
  if (reference.count != pose_source.count || !reference.same_geometry(pose_source))
    throw InvalidInput("reference and pose source shapes differ");
  const FrameStack prior = apply_mask(pose_source, strategy, pose_landmarks, boundary);
  const int c = reference.channels;
  FrameStack out(reference.count, reference.height, reference.width, 2 * c);
  const std::size_t pixels = static_cast<std::size_t>(reference.count) * reference.height * reference.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    std::copy_n(reference.data.data() + p * c, c, out.data.data() + p * 2 * c);
    std::copy_n(prior.data.data() + p * c, c, out.data.data() + p * 2 * c + c);
  }
  return out;
}

}  // namespace lipemo
