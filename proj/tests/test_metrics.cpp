#include "doctest.h"

#include <cmath>

#include "metric_oracles.hpp"
#include "siammcvae/metrics.hpp"
#include "testers.hpp"

using namespace siammcvae;

namespace {

Image random_image(int h, int w, int c, Rng& rng, double lo = 0, double hi = 255) {
  Image img(h, w, c);
  for (auto& v : img.px) v = rng.uniform(lo, hi);
  return img;
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("mse and mae basics") {
  Rng rng(1);
  Image a = random_image(8, 8, 3, rng);
  CHECK(mse(a, a) == 0.0);
  CHECK(mae(a, a) == 0.0);

  Image b = a;
  for (auto& v : b.px) v += 3.0;
  CHECK(mse(a, b) == doctest::Approx(9.0).epsilon(1e-14));
  CHECK(mae(a, b) == doctest::Approx(3.0).epsilon(1e-14));

  // direct-summation oracle, exact
  Image c = random_image(8, 8, 3, rng);
  double se = 0, ae = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    se += (a.px[i] - c.px[i]) * (a.px[i] - c.px[i]);
    ae += std::abs(a.px[i] - c.px[i]);
  }
  CHECK(mse(a, c) == se / static_cast<double>(a.px.size()));
  CHECK(mae(a, c) == ae / static_cast<double>(a.px.size()));

  Image d(4, 4, 3);
  CHECK_THROWS_AS(mse(a, d), ShapeError);
}

TEST_CASE("psnr definition, zero point and cap") {
  CHECK(psnr_from_mse(65025.0) == 0.0);  // constant difference of 255
  CHECK(psnr_from_mse(0.0) == 100.0);    // identical images, capped sentinel
  CHECK(psnr_from_mse(123.01) == doctest::Approx(27.2313994237).epsilon(1e-9));
  CHECK(psnr_from_mse(1e-9) == 100.0);   // near-zero mse also capped

  Rng rng(2);
  Image a = random_image(6, 6, 1, rng);
  CHECK(psnr(a, a) == 100.0);
}

TEST_CASE("ssim identity, symmetry, oracle agreement") {
  Rng rng(3);
  Image a = random_image(16, 16, 1, rng);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Image b = random_image(16, 16, 1, rng);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
  CHECK(std::abs(ssim(a, b) - metric_oracles::ssim_direct(a, b)) < 1e-10);

  // color inputs go through luminance
  Image ca = random_image(16, 16, 3, rng);
  Image cb = random_image(16, 16, 3, rng);
  CHECK(std::abs(ssim(ca, cb) - metric_oracles::ssim_direct(ca, cb)) < 1e-10);

  Image tiny(8, 8, 1);
  CHECK_THROWS_AS(ssim(tiny, tiny), ValueError);
}

TEST_CASE("fsim identity, range, symmetry, size guard") {
  Rng rng(4);
  Image a = random_image(32, 32, 1, rng);
  CHECK(fsim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

  for (int trial = 0; trial < 3; ++trial) {
    Image x = random_image(32, 32, 1, rng);
    Image y = random_image(32, 32, 1, rng);
    double v = fsim(x, y);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(fsim(y, x)).epsilon(1e-12));
  }

  Image tiny(16, 16, 1);
  CHECK_THROWS_AS(fsim(tiny, tiny), ValueError);
}

TEST_CASE("fsim agrees with the direct-DFT oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    Image a = random_image(32, 32, 1, rng);
    Image b = a;
    for (auto& v : b.px) v = std::clamp(v + rng.normal() * 12.0, 0.0, 255.0);
    double ours = fsim(a, b);
    double direct = metric_oracles::fsim_direct(a, b);
    CHECK(std::abs(ours - direct) < 1e-6);
  }
}

TEST_CASE("fsim degrades monotonically with noise level") {
  Rng rng(6);
  // structured image: smooth ramp plus a few blocks
  Image a(48, 48, 1);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x)
      a.at(y, x, 0) = 2.0 * x + 1.5 * y + ((x / 12 + y / 12) % 2 ? 60.0 : 0.0);
  auto noisy = [&](double sigma, uint64_t seed) {
    Rng nrng(seed);
    Image out = a;
    for (auto& v : out.px) v = std::clamp(v + sigma * nrng.normal(), 0.0, 255.0);
    return out;
  };
  double light = fsim(a, noisy(5.0, 42));
  double heavy = fsim(a, noisy(25.0, 42));
  CHECK(light > heavy);
}

TEST_CASE("aggregation is the mean of per-image reports") {
  std::vector<MetricReport> rs = {{10, 2, 30, 0.9, 0.8}, {20, 4, 40, 0.7, 0.6}};
  MetricReport m = mean_report(rs);
  CHECK(m.mse == 15.0);
  CHECK(m.mae == 3.0);
  CHECK(m.psnr == 35.0);  // PSNR averaged per-image, not pooled
  CHECK(m.ssim == doctest::Approx(0.8));
  CHECK(m.fsim == doctest::Approx(0.7));
}

TEST_CASE("masked pixel metrics") {
  Rng rng(7);
  Image a = random_image(4, 4, 1, rng);
  Image b = a;
  b.at(0, 0, 0) += 10.0;
  b.at(1, 1, 0) += 10.0;
  std::vector<bool> mask(a.px.size(), false);
  mask[0] = true;
  CHECK(masked_mse(a, b, mask) == 100.0);
  CHECK(masked_mae(a, b, mask) == 10.0);
  std::vector<bool> none(a.px.size(), false);
  CHECK_THROWS_AS(masked_mse(a, b, none), ValueError);
}

TEST_CASE("luminance conversion uses BT.601 weights") {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = 100;
  img.at(0, 0, 1) = 50;
  img.at(0, 0, 2) = 200;
  Image y = to_luminance(img);
  CHECK(y.at(0, 0, 0) == doctest::Approx(0.299 * 100 + 0.587 * 50 + 0.114 * 200));
}

TEST_SUITE_END();
