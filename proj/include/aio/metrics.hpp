#pragma once

#include "aio/image.hpp"

namespace aio::metrics {

// 10*log10(1/MSE) on [0,1]-scaled RGB, capped at 100 dB for identical inputs.
double psnr(const ImageTensor& a, const ImageTensor& b);

// Mean SSIM, 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2,
// averaged over RGB channels. Windows are evaluated where they fit entirely
// inside the image (no padding).
double ssim(const ImageTensor& a, const ImageTensor& b);

}  // namespace aio::metrics
