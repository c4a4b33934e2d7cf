#pragma once

#include <string>
#include <vector>

#include "siammcvae/common.hpp"
#include "siammcvae/image.hpp"

namespace siammcvae {

// Synthetic driving-scene stand-in: rectangles and ellipses moving at
// constant velocity over a static background.
struct SceneSpec {
  uint64_t seed = 1;
  int height = 64;
  int width = 64;
  int objects = 8;
  double vel_min = 1.0;   // pixels/frame
  double vel_max = 3.0;
  enum class Background { gradient, noise } background = Background::gradient;
};

SceneSpec::Background background_from_name(const std::string& name);
const char* background_name(SceneSpec::Background b);

struct ObjectTrack {
  bool ellipse = false;
  double cx0 = 0, cy0 = 0;  // center at frame 0
  double vx = 0, vy = 0;    // pixels/frame
  double rx = 0, ry = 0;    // half extents
  int color[3] = {0, 0, 0};
};

// Deterministic in (spec, length); all pixel values are integers in
// [0, 255]. `tracks` optionally receives the object trajectories.
std::vector<Image> generate_scene(const SceneSpec& spec, int length,
                                  std::vector<ObjectTrack>* tracks = nullptr);

struct FramePair {
  Image a1;  // intact conditioning frame (earlier)
  Image a2;  // frame to be restored (later, carries the mask)
  int gap = 1;
  std::string id;
};

// Pairs (frame[t], frame[t+gap]) with t drawn uniformly.
std::vector<FramePair> sample_pairs(const std::vector<Image>& sequence, int gap, int count,
                                    Rng& rng, const std::string& id_prefix = "pair");

// Binary PPM (P6), 8-bit, maxval 255. Values are rounded to the nearest
// integer on write; reading a written file reproduces the bytes exactly.
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);
Image parse_ppm(const std::vector<unsigned char>& bytes);  // throws ParseError with byte offset
std::vector<unsigned char> encode_ppm(const Image& img);

// Dataset directory layout: a/NNNN.ppm, b/NNNN.ppm and a manifest of
// `id<TAB>pathA<TAB>pathB<TAB>gap` lines (paths relative to the manifest).
void write_pair_dataset(const std::string& dir, const std::vector<FramePair>& pairs);
std::vector<FramePair> load_pair_dataset(const std::string& dir);

}  // namespace siammcvae
