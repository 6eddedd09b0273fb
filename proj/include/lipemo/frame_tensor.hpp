#pragma once

#include "lipemo/media.hpp"
#include "lipemo/tensor.hpp"

namespace lipemo {

// [count, H, W, C] frames <-> [count, C, H, W] tensor.
Tensor to_tensor(const FrameStack& frames);
FrameStack to_frames(const Tensor& t);

// Audio [steps, bands] split into `windows` consecutive chunks of `steps` rows:
// [windows, 1, steps, bands].
Tensor audio_to_tensor(const AudioFeatures& audio, int windows);

}  // namespace lipemo
