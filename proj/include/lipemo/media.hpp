#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace lipemo {

// Frames stored as [count, height, width, channels], float32 in [0, 1].
struct FrameStack {
  int count = 0;
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> data;

  FrameStack() = default;
  FrameStack(int n, int h, int w, int c)
      : count(n), height(h), width(w), channels(c),
        data(static_cast<std::size_t>(n) * h * w * c, 0.0f) {}

  std::size_t frame_size() const { return static_cast<std::size_t>(height) * width * channels; }
  float* frame(int i) { return data.data() + i * frame_size(); }
  const float* frame(int i) const { return data.data() + i * frame_size(); }
  float& at(int i, int y, int x, int c) {
    return data[((static_cast<std::size_t>(i) * height + y) * width + x) * channels + c];
  }
  float at(int i, int y, int x, int c) const {
    return data[((static_cast<std::size_t>(i) * height + y) * width + x) * channels + c];
  }
  // Frames [begin, begin + n).
  FrameStack window(int begin, int n) const;
  bool same_geometry(const FrameStack& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// Mel-like feature rows [steps, bands], time-aligned to a FrameStack at a fixed
// number of steps per video frame.
struct AudioFeatures {
  int steps = 0;
  int bands = 0;
  std::vector<float> data;

  AudioFeatures() = default;
  AudioFeatures(int s, int b)
      : steps(s), bands(b), data(static_cast<std::size_t>(s) * b, 0.0f) {}
  float& at(int s, int b) { return data[static_cast<std::size_t>(s) * bands + b]; }
  float at(int s, int b) const { return data[static_cast<std::size_t>(s) * bands + b]; }
  AudioFeatures window(int begin, int n) const;
  // Mean over bands of each step.
  std::vector<double> step_envelope() const;
  // Mean envelope of each group of `steps_per_frame` steps.
  std::vector<double> frame_envelope(int steps_per_frame) const;
};

struct Point2 {
  double x = 0;
  double y = 0;
};

using Landmarks = std::vector<Point2>;

}  // namespace lipemo
