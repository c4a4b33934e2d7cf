#pragma once

#include <vector>

#include "siammcvae/image.hpp"

namespace siammcvae {

struct MetricReport {
  double mse = 0.0;
  double mae = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double fsim = 0.0;
};

// Full-reference metrics on the 0-255 scale. psnr is capped at 100 dB
// (the identical-image sentinel); ssim/fsim convert color inputs to
// luminance first.
double mse(const Image& a, const Image& b);
double mae(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b);
double psnr_from_mse(double mse_value);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
// L=255, valid-region pooling. Images must be at least 11x11.
double ssim(const Image& a, const Image& b);

// Luminance FSIM: phase congruency from a 4-scale x 4-orientation log-Gabor
// bank, Scharr gradient magnitude, T1=0.85, T2=160, pooled by the max phase
// congruency. Images must be at least 32x32.
double fsim(const Image& a, const Image& b);

MetricReport compare_images(const Image& a, const Image& b);

// Mean of per-image reports (the dataset aggregation convention, PSNR
// included).
MetricReport mean_report(const std::vector<MetricReport>& reports);

// Pixel metrics restricted to the positions where mask is true.
double masked_mse(const Image& a, const Image& b, const std::vector<bool>& mask);
double masked_mae(const Image& a, const Image& b, const std::vector<bool>& mask);

}  // namespace siammcvae
