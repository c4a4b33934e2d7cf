#pragma once

#include <vector>

#include "siammcvae/common.hpp"
#include "siammcvae/tensor.hpp"

namespace siammcvae {

// Model-space pixel scale. A power of two keeps the into-model and
// out-of-model conversions exactly inverse, so visible pixels survive the
// round trip bit-identically.
constexpr double kPixelScale = 256.0;

// Row-major H x W x C raster, values on the 0-255 scale.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> px;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        px(static_cast<size_t>(h) * w * c, fill) {
    if (h <= 0 || w <= 0 || c <= 0) throw ValueError("Image: extents must be positive");
  }

  double& at(int y, int x, int c) {
    return px[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return px[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return px.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// BT.601 luminance; single-channel images pass through.
Image to_luminance(const Image& img);

// Conversions between images and model-space tensors (H x W x C), with a
// multiplicative scale (1/255 into the model, 255 out of it).
Tensor image_to_tensor(const Image& img, double scal);
Image tensor_to_image(const Tensor& t, double scal);  // clamps to [0, 255]

}  // namespace siammcvae
