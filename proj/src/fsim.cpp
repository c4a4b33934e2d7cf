#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <vector>

#include "siammcvae/metrics.hpp"

namespace siammcvae {

namespace {

using Complex = std::complex<double>;

// Log-Gabor bank constants (4 scales x 4 orientations, luminance FSIM).
constexpr int kScales = 4;
constexpr int kOrients = 4;
constexpr double kMinWavelength = 6.0;
constexpr double kMult = 2.0;
constexpr double kSigmaOnF = 0.55;
constexpr double kDThetaOnSigma = 1.2;
constexpr double kLowpassCutoff = 0.45;
constexpr int kLowpassOrder = 15;
constexpr double kEpsilon = 1e-4;
constexpr double kT1 = 0.85;   // phase-congruency similarity constant
constexpr double kT2 = 160.0;  // gradient similarity constant
constexpr double kPi = 3.14159265358979323846;

std::mutex fftw_mutex;

// Serialized FFTW calls; plans are created and destroyed under the lock.
std::vector<Complex> fft2(const std::vector<Complex>& in, int h, int w, bool inverse) {
  std::vector<Complex> out(in.size());
  {
    std::lock_guard<std::mutex> lock(fftw_mutex);
    fftw_plan plan = fftw_plan_dft_2d(
        h, w,
        reinterpret_cast<fftw_complex*>(const_cast<Complex*>(in.data())),
        reinterpret_cast<fftw_complex*>(out.data()),
        inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  if (inverse) {
    double norm = 1.0 / (static_cast<double>(h) * w);
    for (auto& v : out) v *= norm;
  }
  return out;
}

// DFT frequency along one axis, DC at index 0.
double freq(int i, int n) {
  return (i <= (n - 1) / 2 ? i : i - n) / static_cast<double>(n);
}

struct FilterBank {
  int h = 0, w = 0;
  // filters[o * kScales + s], real transfer functions on the DFT grid
  std::vector<std::vector<double>> filters;
};

const FilterBank& filter_bank(int h, int w) {
  static std::mutex bank_mutex;
  static std::map<std::pair<int, int>, FilterBank> cache;
  std::lock_guard<std::mutex> lock(bank_mutex);
  auto key = std::make_pair(h, w);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  FilterBank bank;
  bank.h = h;
  bank.w = w;
  const size_t npix = static_cast<size_t>(h) * w;
  const double theta_sigma = kPi / kOrients / kDThetaOnSigma;
  const double log_sigma = std::log(kSigmaOnF);

  std::vector<double> radius(npix), theta(npix);
  for (int y = 0; y < h; ++y) {
    double fy = freq(y, h);
    for (int x = 0; x < w; ++x) {
      double fx = freq(x, w);
      size_t i = static_cast<size_t>(y) * w + x;
      radius[i] = std::sqrt(fx * fx + fy * fy);
      theta[i] = std::atan2(-fy, fx);
    }
  }
  radius[0] = 1.0;  // keep log() off the DC bin; the radial filter zeroes it

  std::vector<std::vector<double>> radial(kScales, std::vector<double>(npix));
  for (int s = 0; s < kScales; ++s) {
    double wavelength = kMinWavelength * std::pow(kMult, s);
    double f0 = 1.0 / wavelength;
    for (size_t i = 0; i < npix; ++i) {
      double lr = std::log(radius[i] / f0);
      double lowpass = 1.0 / (1.0 + std::pow(radius[i] / kLowpassCutoff, 2.0 * kLowpassOrder));
      radial[static_cast<size_t>(s)][i] =
          std::exp(-(lr * lr) / (2.0 * log_sigma * log_sigma)) * lowpass;
    }
    radial[static_cast<size_t>(s)][0] = 0.0;
  }

  bank.filters.resize(static_cast<size_t>(kScales) * kOrients);
  for (int o = 0; o < kOrients; ++o) {
    double angle = o * kPi / kOrients;
    double ca = std::cos(angle), sa = std::sin(angle);
    std::vector<double> spread(npix);
    for (size_t i = 0; i < npix; ++i) {
      double st = std::sin(theta[i]), ct = std::cos(theta[i]);
      double ds = st * ca - ct * sa;
      double dc = ct * ca + st * sa;
      double dtheta = std::abs(std::atan2(ds, dc));
      spread[i] = std::exp(-(dtheta * dtheta) / (2.0 * theta_sigma * theta_sigma));
    }
    for (int s = 0; s < kScales; ++s) {
      auto& f = bank.filters[static_cast<size_t>(o) * kScales + s];
      f.resize(npix);
      for (size_t i = 0; i < npix; ++i) f[i] = radial[static_cast<size_t>(s)][i] * spread[i];
    }
  }
  return cache.emplace(key, std::move(bank)).first->second;
}

// Kovesi-style phase congruency pooled over orientations. The noise
// threshold of the original estimator is omitted (a fixed zero threshold);
// values stay in [0, 1].
std::vector<double> phase_congruency(const Image& gray) {
  const int h = gray.height, w = gray.width;
  const size_t npix = static_cast<size_t>(h) * w;
  const FilterBank& bank = filter_bank(h, w);

  std::vector<Complex> img(npix);
  for (size_t i = 0; i < npix; ++i) img[i] = Complex(gray.px[i], 0.0);
  std::vector<Complex> spectrum = fft2(img, h, w, false);

  std::vector<double> energy_all(npix, 0.0), amplitude_all(npix, 0.0);
  std::vector<std::vector<Complex>> responses(kScales);
  std::vector<Complex> filtered(npix);
  for (int o = 0; o < kOrients; ++o) {
    std::vector<double> sum_e(npix, 0.0), sum_o(npix, 0.0), sum_a(npix, 0.0);
    for (int s = 0; s < kScales; ++s) {
      const auto& f = bank.filters[static_cast<size_t>(o) * kScales + s];
      for (size_t i = 0; i < npix; ++i) filtered[i] = spectrum[i] * f[i];
      responses[static_cast<size_t>(s)] = fft2(filtered, h, w, true);
      for (size_t i = 0; i < npix; ++i) {
        Complex eo = responses[static_cast<size_t>(s)][i];
        sum_e[i] += eo.real();
        sum_o[i] += eo.imag();
        sum_a[i] += std::abs(eo);
      }
    }
    for (size_t i = 0; i < npix; ++i) {
      double x_energy = std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + kEpsilon;
      double mean_e = sum_e[i] / x_energy, mean_o = sum_o[i] / x_energy;
      double energy = 0.0;
      for (int s = 0; s < kScales; ++s) {
        Complex eo = responses[static_cast<size_t>(s)][i];
        energy += eo.real() * mean_e + eo.imag() * mean_o -
                  std::abs(eo.real() * mean_o - eo.imag() * mean_e);
      }
      energy_all[i] += std::max(energy, 0.0);
      amplitude_all[i] += sum_a[i];
    }
  }

  std::vector<double> pc(npix);
  for (size_t i = 0; i < npix; ++i) pc[i] = energy_all[i] / (kEpsilon + amplitude_all[i]);
  return pc;
}

// Scharr gradient magnitude, zero-padded same-size correlation.
std::vector<double> gradient_magnitude(const Image& gray) {
  const int h = gray.height, w = gray.width;
  static const double kx[3][3] = {{3, 0, -3}, {10, 0, -10}, {3, 0, -3}};
  std::vector<double> out(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double gx = 0.0, gy = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          double v = gray.at(yy, xx, 0);
          gx += kx[dy + 1][dx + 1] * v;
          gy += kx[dx + 1][dy + 1] * v;
        }
      }
      gx /= 16.0;
      gy /= 16.0;
      out[static_cast<size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return out;
}

}  // namespace

double fsim(const Image& a_in, const Image& b_in) {
  if (!a_in.same_shape(b_in)) throw ShapeError("fsim: image shapes differ");
  if (a_in.height < 32 || a_in.width < 32)
    throw ValueError("fsim: images must be at least 32x32");
  Image a = to_luminance(a_in), b = to_luminance(b_in);

  std::vector<double> pc1 = phase_congruency(a);
  std::vector<double> pc2 = phase_congruency(b);
  std::vector<double> g1 = gradient_magnitude(a);
  std::vector<double> g2 = gradient_magnitude(b);

  double num = 0.0, den = 0.0, plain = 0.0;
  for (size_t i = 0; i < pc1.size(); ++i) {
    double s_pc = (2.0 * pc1[i] * pc2[i] + kT1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + kT1);
    double s_g = (2.0 * g1[i] * g2[i] + kT2) / (g1[i] * g1[i] + g2[i] * g2[i] + kT2);
    double pcm = std::max(pc1[i], pc2[i]);
    num += s_pc * s_g * pcm;
    den += pcm;
    plain += s_pc * s_g;
  }
  if (den == 0.0) return plain / static_cast<double>(pc1.size());  // featureless images
  return num / den;
}

}  // namespace siammcvae
