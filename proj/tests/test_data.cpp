#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "siammcvae/data.hpp"
#include "siammcvae/metrics.hpp"

using namespace siammcvae;

namespace {

std::string temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() /
           (std::string("siammcvae_test_") + tag + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("scene generation is deterministic and bounded") {
  SceneSpec spec;
  spec.seed = 9;
  spec.height = 32;
  spec.width = 32;
  spec.objects = 3;
  auto a = generate_scene(spec, 8);
  auto b = generate_scene(spec, 8);
  REQUIRE(a.size() == 8);
  for (size_t f = 0; f < a.size(); ++f) CHECK(a[f].px == b[f].px);
  for (const Image& frame : a)
    for (double v : frame.px) {
      CHECK(v >= 0.0);
      CHECK(v <= 255.0);
      CHECK(v == std::round(v));
    }
}

TEST_CASE("zero velocity freezes the scene") {
  SceneSpec spec;
  spec.seed = 4;
  spec.height = 32;
  spec.width = 32;
  spec.objects = 2;
  spec.vel_min = 0.0;
  spec.vel_max = 0.0;
  auto frames = generate_scene(spec, 6);
  for (size_t f = 1; f < frames.size(); ++f) CHECK(frames[f].px == frames[0].px);
}

TEST_CASE("object centroid moves by gap * velocity up to rasterization") {
  SceneSpec spec;
  spec.seed = 31;
  spec.height = 64;
  spec.width = 64;
  spec.objects = 1;  // lone object, palette color (255, 0, 0)
  spec.vel_min = 1.0;
  spec.vel_max = 2.0;
  std::vector<ObjectTrack> tracks;
  auto frames = generate_scene(spec, 12, &tracks);
  REQUIRE(tracks.size() == 1);

  auto centroid = [&](const Image& img, double* cx, double* cy) {
    double sx = 0, sy = 0;
    int n = 0;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        if (img.at(y, x, 0) == 255 && img.at(y, x, 1) == 0 && img.at(y, x, 2) == 0) {
          sx += x;
          sy += y;
          ++n;
        }
    REQUIRE(n > 0);
    *cx = sx / n;
    *cy = sy / n;
  };

  for (int gap : {3, 8}) {
    double x0, y0, x1, y1;
    centroid(frames[0], &x0, &y0);
    centroid(frames[static_cast<size_t>(gap)], &x1, &y1);
    CHECK(std::abs((x1 - x0) - gap * tracks[0].vx) <= 1.0);
    CHECK(std::abs((y1 - y0) - gap * tracks[0].vy) <= 1.0);
  }
}

TEST_CASE("pair sampling contract") {
  SceneSpec spec;
  spec.seed = 2;
  spec.height = 16;
  spec.width = 16;
  spec.objects = 1;
  auto frames = generate_scene(spec, 10);

  Rng rng(5);
  auto pairs = sample_pairs(frames, 24 % 9 /*gap 6*/, 4, rng);
  CHECK(pairs.size() == 4);
  for (const auto& p : pairs) CHECK(p.gap == 6);

  // gap = length - 1 leaves exactly one admissible start
  Rng rng2(7);
  auto edge = sample_pairs(frames, 9, 3, rng2);
  for (const auto& p : edge) {
    CHECK(p.a1.px == frames[0].px);
    CHECK(p.a2.px == frames[9].px);
  }

  Rng a(11), b(11);
  auto p1 = sample_pairs(frames, 2, 5, a);
  auto p2 = sample_pairs(frames, 2, 5, b);
  for (size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].a1.px == p2[i].a1.px);

  Rng c(1);
  CHECK_THROWS_AS(sample_pairs(frames, 10, 1, c), ValueError);
}

TEST_CASE("larger gaps mean larger mean frame difference") {
  // expectation over 100 scene seeds; gaps rescaled from the frame-gap sweep
  std::vector<int> gaps = {2, 4, 8, 12};
  std::vector<double> avg(gaps.size(), 0.0);
  for (uint64_t seed = 1; seed <= 100; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    spec.height = 32;
    spec.width = 32;
    spec.objects = 4;
    spec.vel_min = 0.5;
    spec.vel_max = 2.0;
    auto frames = generate_scene(spec, 16);
    for (size_t gi = 0; gi < gaps.size(); ++gi)
      avg[gi] += mae(frames[0], frames[static_cast<size_t>(gaps[gi])]);
  }
  for (size_t gi = 1; gi < gaps.size(); ++gi) CHECK(avg[gi] > avg[gi - 1]);
}

TEST_CASE("ppm round-trip is bit-identical") {
  Rng rng(3);
  Image img(16, 16, 3);
  for (auto& v : img.px) v = static_cast<double>(rng.below(256));
  std::vector<unsigned char> bytes = encode_ppm(img);
  Image back = parse_ppm(bytes);
  CHECK(back.px == img.px);
  CHECK(encode_ppm(back) == bytes);

  std::string dir = temp_dir("ppm");
  write_ppm(dir + "/x.ppm", img);
  CHECK(read_ppm(dir + "/x.ppm").px == img.px);
}

TEST_CASE("ppm fixture: hand-built 2x2 file") {
  std::string head = "P6\n2 2\n255\n";
  std::vector<unsigned char> bytes(head.begin(), head.end());
  for (int i = 0; i < 12; ++i) bytes.push_back(static_cast<unsigned char>(i * 20));
  Image img = parse_ppm(bytes);
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.at(0, 0, 0) == 0.0);
  CHECK(img.at(1, 1, 2) == 220.0);
}

TEST_CASE("ppm parse errors carry a byte offset") {
  std::string head = "P6\n2 2\n254\n";  // wrong maxval
  std::vector<unsigned char> bytes(head.begin(), head.end());
  bytes.resize(bytes.size() + 12, 0);
  try {
    parse_ppm(bytes);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("maxval") != std::string::npos);
    CHECK(msg.find("byte") != std::string::npos);
  }

  std::string trunc = "P6\n4 4\n255\nxx";
  CHECK_THROWS_AS(parse_ppm(std::vector<unsigned char>(trunc.begin(), trunc.end())), ParseError);
  std::string magic = "P5\n2 2\n255\n";
  CHECK_THROWS_AS(parse_ppm(std::vector<unsigned char>(magic.begin(), magic.end())), ParseError);
}

TEST_CASE("pair dataset round-trips through the manifest") {
  SceneSpec spec;
  spec.seed = 12;
  spec.height = 16;
  spec.width = 16;
  spec.objects = 2;
  auto frames = generate_scene(spec, 8);
  Rng rng(1);
  auto pairs = sample_pairs(frames, 3, 4, rng);

  std::string dir = temp_dir("dataset");
  write_pair_dataset(dir, pairs);
  auto loaded = load_pair_dataset(dir);
  REQUIRE(loaded.size() == pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    CHECK(loaded[i].id == pairs[i].id);
    CHECK(loaded[i].gap == pairs[i].gap);
    CHECK(loaded[i].a1.px == pairs[i].a1.px);
    CHECK(loaded[i].a2.px == pairs[i].a2.px);
  }
  CHECK_THROWS_AS(load_pair_dataset(dir + "/missing"), ParseError);
}

TEST_SUITE_END();
