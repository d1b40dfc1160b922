#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aio/degrade.hpp"
#include "aio/errors.hpp"
#include "aio/metrics.hpp"

using namespace aio;
using metrics::psnr;
using metrics::ssim;

namespace {
// SSIM oracle: literal windowed definition, no separable filtering, no
// incremental covariance formula. Kept independent of the implementation.
double ssim_oracle(const ImageTensor& a, const ImageTensor& b) {
  const int win = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double w[11][11];
  double wsum = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      const double dy = i - 5.0, dx = j - 5.0;
      w[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      wsum += w[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) w[i][j] /= wsum;

  double total = 0;
  for (int c = 0; c < 3; ++c) {
    double acc = 0;
    int count = 0;
    for (int y = 0; y + win <= a.height; ++y)
      for (int x = 0; x + win <= a.width; ++x) {
        double ma = 0, mb = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            ma += w[i][j] * a.at(y + i, x + j, c);
            mb += w[i][j] * b.at(y + i, x + j, c);
          }
        double va = 0, vb = 0, cov = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double da = a.at(y + i, x + j, c) - ma;
            const double db = b.at(y + i, x + j, c) - mb;
            va += w[i][j] * da * da;
            vb += w[i][j] * db * db;
            cov += w[i][j] * da * db;
          }
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    total += acc / count;
  }
  return total / 3.0;
}
}  // namespace

TEST_CASE("psnr: identity cap and exact offset") {
  const ImageTensor img = degrade::procedural_clean(32, 32, 3);
  CHECK(psnr(img, img) == 100.0);

  ImageTensor shifted = img;
  ImageTensor base(32, 32, 0.4);
  ImageTensor off(32, 32, 0.5);
  CHECK(psnr(base, off) == doctest::Approx(20.0).epsilon(1e-9));

  ImageTensor other(16, 16, 0.0);
  CHECK_THROWS_AS((void)psnr(img, other), ContractError);
}

TEST_CASE("psnr strictly decreases in MSE") {
  ImageTensor a(16, 16, 0.5);
  ImageTensor b1(16, 16, 0.52);
  ImageTensor b2(16, 16, 0.55);
  CHECK(psnr(a, b1) > psnr(a, b2));
}

TEST_CASE("ssim: identity, symmetry, range") {
  const ImageTensor img = degrade::procedural_clean(32, 32, 9);
  CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));

  const ImageTensor noisy = degrade::synth_noise(img, 30.0, 4);
  const double s1 = ssim(img, noisy);
  const double s2 = ssim(noisy, img);
  CHECK(s1 == doctest::Approx(s2).epsilon(1e-12));
  CHECK(s1 >= -1.0);
  CHECK(s1 < 1.0);

  ImageTensor tiny(8, 8, 0.0);
  CHECK_THROWS_AS((void)ssim(tiny, tiny), ContractError);
}

TEST_CASE("ssim matches the definitional oracle on a fixed pattern pair") {
  const ImageTensor a = degrade::procedural_clean(32, 32, 21);
  const ImageTensor b = degrade::synth_noise(a, 35.0, 22);
  CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-9));

  const ImageTensor c = degrade::synth_blur(a, 7, 10.0, 0);
  CHECK(ssim(a, c) == doctest::Approx(ssim_oracle(a, c)).epsilon(1e-9));
}

TEST_CASE("noise sigma 25 lands at the analytic psnr") {
  ImageTensor gray(128, 128, 0.5);
  const ImageTensor noisy = degrade::synth_noise(gray, 25.0, 1234);
  CHECK(psnr(noisy, gray) == doctest::Approx(20.17).epsilon(0.3 / 20.17));
}
