#pragma once

#include <cmath>

#include "fnvr/common.hpp"
#include "fnvr/image.hpp"

namespace fnvr {

// 10 log10(max^2 / MSE); identical images hit the 99 dB sentinel cap.
inline double psnr(const Image<float>& a, const Image<float>& b, double max_value = 1.0) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    fail("psnr: image shape mismatch");
  double se = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(max_value * max_value / mse));
}

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5) with the standard
// stabilizers, averaged over channels; window-truncated borders are skipped.
inline double ssim(const Image<float>& a, const Image<float>& b, double max_value = 1.0) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    fail("ssim: image shape mismatch");
  const int half = 5;
  double w[11];
  double wsum = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - half;
    w[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    wsum += w[i];
  }
  for (double& v : w) v /= wsum;

  const double c1 = (0.01 * max_value) * (0.01 * max_value);
  const double c2 = (0.03 * max_value) * (0.03 * max_value);
  double total = 0;
  int64_t count = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y = half; y < a.height - half; ++y)
      for (int x = half; x < a.width - half; ++x) {
        double ma = 0, mb = 0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx) {
            const double ww = w[dy + half] * w[dx + half];
            ma += ww * a.at(x + dx, y + dy, c);
            mb += ww * b.at(x + dx, y + dy, c);
          }
        double va = 0, vb = 0, cov = 0;
        for (int dy = -half; dy <= half; ++dy)
          for (int dx = -half; dx <= half; ++dx) {
            const double ww = w[dy + half] * w[dx + half];
            const double da = a.at(x + dx, y + dy, c) - ma;
            const double db = b.at(x + dx, y + dy, c) - mb;
            va += ww * da * da;
            vb += ww * db * db;
            cov += ww * da * db;
          }
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  if (count == 0) fail("ssim: image smaller than the window");
  return total / static_cast<double>(count);
}

struct DepthL1Result {
  double value = 0;
  bool defined = false;
  int64_t valid_pixels = 0;
};

// mean absolute difference over jointly valid pixels (scene units)
inline DepthL1Result depth_l1(const Image<float>& a, const Image<float>& b,
                              const Image<uint8_t>& valid) {
  if (a.width != b.width || a.height != b.height)
    fail("depth_l1: image shape mismatch");
  DepthL1Result out;
  double sum = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (!valid.at(x, y, 0)) continue;
      sum += std::abs(static_cast<double>(a.at(x, y, 0)) - b.at(x, y, 0));
      ++out.valid_pixels;
    }
  if (out.valid_pixels == 0) return out;  // undefined, flagged
  out.value = sum / static_cast<double>(out.valid_pixels);
  out.defined = true;
  return out;
}

}  // namespace fnvr
