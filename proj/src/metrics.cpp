#include "siammcvae/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace siammcvae {

Image to_luminance(const Image& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3)
    throw ShapeError("to_luminance: expected 1 or 3 channels, got " +
                     std::to_string(img.channels));
  Image out(img.height, img.width, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out.at(y, x, 0) =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  return out;
}

Tensor image_to_tensor(const Image& img, double scal) {
  std::vector<double> v(img.px.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = img.px[i] * scal;
  return Tensor::constant({img.height, img.width, img.channels}, std::move(v));
}

Image tensor_to_image(const Tensor& t, double scal) {
  if (t.rank() != 3) throw ShapeError("tensor_to_image: expected rank-3");
  Image out(t.dim(0), t.dim(1), t.dim(2));
  for (size_t i = 0; i < out.px.size(); ++i)
    out.px[i] = std::clamp(t.values()[i] * scal, 0.0, 255.0);
  return out;
}

namespace {

void check_pair(const Image& a, const Image& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": image shapes differ");
  if (a.px.empty()) throw ShapeError(std::string(op) + ": empty images");
}

}  // namespace

double mse(const Image& a, const Image& b) {
  check_pair(a, b, "mse");
  double s = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    double d = a.px[i] - b.px[i];
    s += d * d;
  }
  return s / static_cast<double>(a.px.size());
}

double mae(const Image& a, const Image& b) {
  check_pair(a, b, "mae");
  double s = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) s += std::abs(a.px[i] - b.px[i]);
  return s / static_cast<double>(a.px.size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse_value));
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

namespace {

// 11x11 Gaussian window, sigma 1.5, normalized to sum 1.
std::vector<double> ssim_window() {
  const int half = 5;
  std::vector<double> w(11 * 11);
  double total = 0.0;
  for (int y = -half; y <= half; ++y)
    for (int x = -half; x <= half; ++x) {
      double v = std::exp(-(x * x + y * y) / (2.0 * 1.5 * 1.5));
      w[static_cast<size_t>((y + half) * 11 + (x + half))] = v;
      total += v;
    }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

double ssim(const Image& a_in, const Image& b_in) {
  check_pair(a_in, b_in, "ssim");
  Image a = to_luminance(a_in), b = to_luminance(b_in);
  const int h = a.height, w = a.width;
  if (h < 11 || w < 11) throw ValueError("ssim: images must be at least 11x11");

  static const std::vector<double> win = ssim_window();
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double c2 = (0.03 * 255) * (0.03 * 255);

  // weighted local moments, valid region only
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + 11 <= h; ++y) {
    for (int x = 0; x + 11 <= w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < 11; ++dy)
        for (int dx = 0; dx < 11; ++dx) {
          double wv = win[static_cast<size_t>(dy * 11 + dx)];
          double va = a.at(y + dy, x + dx, 0);
          double vb = b.at(y + dy, x + dx, 0);
          ma += wv * va;
          mb += wv * vb;
          saa += wv * va * va;
          sbb += wv * vb * vb;
          sab += wv * va * vb;
        }
      double var_a = saa - ma * ma;
      double var_b = sbb - mb * mb;
      double cov = sab - ma * mb;
      double num = (2 * ma * mb + c1) * (2 * cov + c2);
      double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
      total += num / den;
      ++count;
    }
  }
  return total / count;
}

MetricReport compare_images(const Image& a, const Image& b) {
  MetricReport r;
  r.mse = mse(a, b);
  r.mae = mae(a, b);
  r.psnr = psnr_from_mse(r.mse);
  r.ssim = ssim(a, b);
  r.fsim = fsim(a, b);
  return r;
}

MetricReport mean_report(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ValueError("mean_report: no reports");
  MetricReport m;
  for (const auto& r : reports) {
    m.mse += r.mse;
    m.mae += r.mae;
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.fsim += r.fsim;
  }
  double n = static_cast<double>(reports.size());
  m.mse /= n;
  m.mae /= n;
  m.psnr /= n;
  m.ssim /= n;
  m.fsim /= n;
  return m;
}

double masked_mse(const Image& a, const Image& b, const std::vector<bool>& mask) {
  check_pair(a, b, "masked_mse");
  if (mask.size() != a.px.size()) throw ShapeError("masked_mse: mask size mismatch");
  double s = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    if (!mask[i]) continue;
    double d = a.px[i] - b.px[i];
    s += d * d;
    ++n;
  }
  if (n == 0) throw ValueError("masked_mse: empty mask");
  return s / static_cast<double>(n);
}

double masked_mae(const Image& a, const Image& b, const std::vector<bool>& mask) {
  check_pair(a, b, "masked_mae");
  if (mask.size() != a.px.size()) throw ShapeError("masked_mae: mask size mismatch");
  double s = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    if (!mask[i]) continue;
    s += std::abs(a.px[i] - b.px[i]);
    ++n;
  }
  if (n == 0) throw ValueError("masked_mae: empty mask");
  return s / static_cast<double>(n);
}

}  // namespace siammcvae
