#pragma once

#include "aio/image.hpp"
#include "aio/tensor.hpp"

namespace aio {

// [H,W,3] image -> [3,H,W] tensor.
ad::Tensor to_chw(const ImageTensor& img, bool requires_grad = false);

// [3,H,W] tensor -> image, clamped to [0,1].
ImageTensor to_image(const ad::Tensor& chw);

}  // namespace aio
