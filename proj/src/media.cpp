#include "lipemo/media.hpp"

#include <algorithm>

#include "lipemo/errors.hpp"

namespace lipemo {

FrameStack FrameStack::window(int begin, int n) const {
  if (begin < 0 || n <= 0 || begin + n > count) throw InvalidInput("frame window out of range");
  FrameStack out(n, height, width, channels);
  std::copy_n(frame(begin), out.data.size(), out.data.begin());
  return out;
}

AudioFeatures AudioFeatures::window(int begin, int n) const {
  if (begin < 0 || n <= 0 || begin + n > steps) throw InvalidInput("audio window out of range");
  AudioFeatures out(n, bands);
  std::copy_n(data.begin() + static_cast<std::size_t>(begin) * bands, out.data.size(),
              out.data.begin());
  return out;
}

std::vector<double> AudioFeatures::step_envelope() const {
  std::vector<double> env(steps, 0.0);
  for (int s = 0; s < steps; ++s) {
    double acc = 0;
    for (int b = 0; b < bands; ++b) acc += at(s, b);
    env[s] = acc / bands;
  }
  return env;
}

std::vector<double> AudioFeatures::frame_envelope(int steps_per_frame) const {
  if (steps_per_frame <= 0 || steps % steps_per_frame != 0)
    throw InvalidInput("audio steps not a multiple of steps per frame");
  auto env = step_envelope();
  std::vector<double> out(steps / steps_per_frame, 0.0);
  for (std::size_t f = 0; f < out.size(); ++f) {
    double acc = 0;
    for (int j = 0; j < steps_per_frame; ++j) acc += env[f * steps_per_frame + j];
    out[f] = acc / steps_per_frame;
  }
  return out;
}

}  // namespace lipemo
