#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lipemo/media.hpp"

namespace lipemo {

enum class MaskKind { half, full };

struct MaskStrategy {
  MaskKind kind = MaskKind::half;
};

std::string to_string(MaskKind k);
MaskKind parse_mask_kind(const std::string& name);

// Counterclockwise (positive shoelace area) vertex list.
struct Polygon {
  std::vector<Point2> vertices;
  double area() const;
  double perimeter() const;
};

// Andrew's monotone chain; collinear points on edges are dropped.
Polygon convex_hull(const std::vector<Point2>& points);

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;
  bool at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const;
};

// Pixel (x, y) has its centre at (x + 0.5, y + 0.5), the renderer's convention.
// Centres on an edge count as inside.
Mask rasterize_mask(const Polygon& poly, int height, int width);

// Hull mask of the boundary landmarks of one frame.
Mask face_mask(const Landmarks& landmarks, const std::vector<int>& boundary, int height, int width);

// Zeroes the lower half (rows >= floor(H/2)) or the boundary hull of every
// frame. `landmarks` holds one entry per frame and is only read for kind=full.
FrameStack apply_mask(const FrameStack& frames, const MaskStrategy& strategy,
                      const std::vector<Landmarks>& landmarks, const std::vector<int>& boundary);

// [T, H, W, 2C]: reference channels followed by the masked pose prior.
FrameStack build_generator_input(const FrameStack& reference, const FrameStack& pose_source,
                                 const MaskStrategy& strategy,
                                 const std::vector<Landmarks>& pose_landmarks,
                                 const std::vector<int>& boundary);

}  // namespace lipemo
