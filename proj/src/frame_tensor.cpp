#include "lipemo/frame_tensor.hpp"

#include <algorithm>

#include "lipemo/errors.hpp"

namespace lipemo {

Tensor to_tensor(const FrameStack& frames) {
  const int n = frames.count, h = frames.height, w = frames.width, c = frames.channels;
  std::vector<real> v(frames.data.size());
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int k = 0; k < c; ++k)
          v[((static_cast<std::size_t>(i) * c + k) * h + y) * w + x] = frames.at(i, y, x, k);
  return Tensor({n, c, h, w}, std::move(v));
}

FrameStack to_frames(const Tensor& t) {
  if (t.rank() != 4) throw InvalidInput("to_frames: need NCHW");
  const int n = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
  FrameStack out(n, h, w, c);
  auto v = t.values();
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < c; ++k)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          out.at(i, y, x, k) =
              static_cast<float>(v[((static_cast<std::size_t>(i) * c + k) * h + y) * w + x]);
  return out;
}

Tensor audio_to_tensor(const AudioFeatures& audio, int windows) {
  if (windows <= 0 || audio.steps % windows != 0)
    throw InvalidInput("audio steps not divisible into windows");
  std::vector<real> v(audio.data.begin(), audio.data.end());
  return Tensor({windows, 1, audio.steps / windows, audio.bands}, std::move(v));
}

}  // namespace lipemo
