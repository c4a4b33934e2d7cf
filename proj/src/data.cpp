#include "siammcvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace siammcvae {

SceneSpec::Background background_from_name(const std::string& name) {
  if (name == "gradient") return SceneSpec::Background::gradient;
  if (name == "noise") return SceneSpec::Background::noise;
  throw ValueError("unknown background style '" + name + "'");
}

const char* background_name(SceneSpec::Background b) {
  return b == SceneSpec::Background::gradient ? "gradient" : "noise";
}

namespace {

// Saturated palette for moving objects; backgrounds stay inside [40, 200]
// per channel so object colors never collide with them.
constexpr int kPalette[8][3] = {
    {255, 0, 0},  {0, 255, 0},   {0, 0, 255},  {255, 255, 0},
    {255, 0, 255}, {0, 255, 255}, {255, 128, 0}, {128, 0, 255},
};

Image render_background(const SceneSpec& spec, Rng& rng) {
  Image bg(spec.height, spec.width, 3);
  if (spec.background == SceneSpec::Background::gradient) {
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
      c0[c] = rng.uniform(40, 200);
      c1[c] = rng.uniform(40, 200);
    }
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        double t = static_cast<double>(x + y) / (spec.width + spec.height - 2);
        for (int c = 0; c < 3; ++c)
          bg.at(y, x, c) = std::round(c0[c] + t * (c1[c] - c0[c]));
      }
  } else {
    double base[3];
    for (int c = 0; c < 3; ++c) base[c] = rng.uniform(80, 160);
    for (auto& v : bg.px) v = 0;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x)
        for (int c = 0; c < 3; ++c)
          bg.at(y, x, c) = std::round(std::clamp(base[c] + rng.uniform(-40, 40), 40.0, 200.0));
  }
  return bg;
}

}  // namespace

std::vector<Image> generate_scene(const SceneSpec& spec, int length,
                                  std::vector<ObjectTrack>* tracks_out) {
  if (length < 2) throw ValueError("generate_scene: length must be at least 2");
  if (spec.height < 8 || spec.width < 8)
    throw ValueError("generate_scene: frame too small");
  if (spec.objects < 0 || spec.vel_min < 0 || spec.vel_max < spec.vel_min)
    throw ValueError("generate_scene: bad object/velocity spec");

  Rng rng(spec.seed);
  Image background = render_background(spec, rng);

  // object tracks; velocities are capped so the center stays in frame for
  // the whole sequence
  std::vector<ObjectTrack> tracks;
  for (int i = 0; i < spec.objects; ++i) {
    ObjectTrack t;
    t.ellipse = (i % 2) == 1;
    double speed = rng.uniform(spec.vel_min, spec.vel_max);
    double angle = rng.uniform(0, 2 * 3.14159265358979323846);
    t.vx = speed * std::cos(angle);
    t.vy = speed * std::sin(angle);
    t.rx = rng.uniform(4, 10);
    t.ry = rng.uniform(4, 10);
    double travel_x = t.vx * (length - 1), travel_y = t.vy * (length - 1);
    double max_travel_x = spec.width - 1.0, max_travel_y = spec.height - 1.0;
    if (std::abs(travel_x) > max_travel_x) {
      t.vx *= max_travel_x / std::abs(travel_x);
      travel_x = t.vx * (length - 1);
    }
    if (std::abs(travel_y) > max_travel_y) {
      t.vy *= max_travel_y / std::abs(travel_y);
      travel_y = t.vy * (length - 1);
    }
    double lo_x = std::max(0.0, -travel_x), hi_x = std::min(max_travel_x, max_travel_x - travel_x);
    double lo_y = std::max(0.0, -travel_y), hi_y = std::min(max_travel_y, max_travel_y - travel_y);
    t.cx0 = rng.uniform(lo_x, hi_x);
    t.cy0 = rng.uniform(lo_y, hi_y);
    const int* col = kPalette[i % 8];
    t.color[0] = col[0];
    t.color[1] = col[1];
    t.color[2] = col[2];
    tracks.push_back(t);
  }

  std::vector<Image> frames;
  frames.reserve(static_cast<size_t>(length));
  for (int f = 0; f < length; ++f) {
    Image frame = background;
    for (const ObjectTrack& t : tracks) {
      double cx = t.cx0 + t.vx * f, cy = t.cy0 + t.vy * f;
      int y0 = std::max(0, static_cast<int>(std::floor(cy - t.ry)));
      int y1 = std::min(spec.height - 1, static_cast<int>(std::ceil(cy + t.ry)));
      int x0 = std::max(0, static_cast<int>(std::floor(cx - t.rx)));
      int x1 = std::min(spec.width - 1, static_cast<int>(std::ceil(cx + t.rx)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          bool inside;
          if (t.ellipse) {
            double dx = (x - cx) / t.rx, dy = (y - cy) / t.ry;
            inside = dx * dx + dy * dy <= 1.0;
          } else {
            inside = std::abs(x - cx) <= t.rx && std::abs(y - cy) <= t.ry;
          }
          if (inside)
            for (int c = 0; c < 3; ++c) frame.at(y, x, c) = t.color[c];
        }
    }
    frames.push_back(std::move(frame));
  }
  if (tracks_out) *tracks_out = std::move(tracks);
  return frames;
}

std::vector<FramePair> sample_pairs(const std::vector<Image>& sequence, int gap, int count,
                                    Rng& rng, const std::string& id_prefix) {
  if (gap < 1) throw ValueError("sample_pairs: gap must be at least 1");
  if (static_cast<int>(sequence.size()) <= gap)
    throw ValueError("sample_pairs: gap " + std::to_string(gap) +
                     " too large for a sequence of " + std::to_string(sequence.size()));
  if (count < 1) throw ValueError("sample_pairs: count must be positive");

  int admissible = static_cast<int>(sequence.size()) - gap;
  std::vector<FramePair> pairs;
  pairs.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    int t = static_cast<int>(rng.below(static_cast<uint64_t>(admissible)));
    FramePair p;
    p.a1 = sequence[static_cast<size_t>(t)];
    p.a2 = sequence[static_cast<size_t>(t + gap)];
    p.gap = gap;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04d", id_prefix.c_str(), i);
    p.id = buf;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// ------------------------------------------------------------------ PPM --

namespace {

struct ByteReader {
  const std::vector<unsigned char>& bytes;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError("ppm: " + msg + " at byte " + std::to_string(pos));
  }
  bool eof() const { return pos >= bytes.size(); }
  unsigned char peek() const { return bytes[pos]; }

  void skip_space_and_comments() {
    while (!eof()) {
      unsigned char c = peek();
      if (c == '#') {
        while (!eof() && peek() != '\n') ++pos;
      } else if (std::isspace(c)) {
        ++pos;
      } else {
        break;
      }
    }
  }

  int read_int() {
    skip_space_and_comments();
    if (eof() || !std::isdigit(peek())) fail("expected an integer");
    long v = 0;
    while (!eof() && std::isdigit(peek())) {
      v = v * 10 + (peek() - '0');
      if (v > 1 << 24) fail("integer out of range");
      ++pos;
    }
    return static_cast<int>(v);
  }
};

}  // namespace

Image parse_ppm(const std::vector<unsigned char>& bytes) {
  ByteReader r{bytes};
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    r.pos = 0;
    r.fail("missing P6 magic");
  }
  r.pos = 2;
  int w = r.read_int();
  int h = r.read_int();
  int maxval = r.read_int();
  if (w <= 0 || h <= 0) r.fail("non-positive dimensions");
  if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval) + " (must be 255)");
  if (r.eof() || !std::isspace(r.peek())) r.fail("expected single whitespace after maxval");
  ++r.pos;  // exactly one whitespace byte before the payload

  size_t need = static_cast<size_t>(w) * h * 3;
  if (bytes.size() - r.pos < need)
    r.fail("truncated payload, need " + std::to_string(need) + " bytes, have " +
           std::to_string(bytes.size() - r.pos));

  Image img(h, w, 3);
  for (size_t i = 0; i < need; ++i) img.px[i] = static_cast<double>(bytes[r.pos + i]);
  return img;
}

std::vector<unsigned char> encode_ppm(const Image& img) {
  if (img.channels != 3) throw ValueError("ppm: only 3-channel images are written");
  std::ostringstream header;
  header << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::string head = header.str();
  std::vector<unsigned char> out(head.begin(), head.end());
  out.reserve(out.size() + img.px.size());
  for (double v : img.px) {
    double r = std::clamp(std::round(v), 0.0, 255.0);
    out.push_back(static_cast<unsigned char>(r));
  }
  return out;
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("ppm: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return parse_ppm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_ppm(const std::string& path, const Image& img) {
  std::vector<unsigned char> bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("ppm: cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("ppm: short write to " + path);
}

// -------------------------------------------------------------- dataset --

void write_pair_dataset(const std::string& dir, const std::vector<FramePair>& pairs) {
  fs::create_directories(fs::path(dir) / "a");
  fs::create_directories(fs::path(dir) / "b");
  std::ofstream manifest(fs::path(dir) / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw ParseError("dataset: cannot write manifest in " + dir);
  for (const FramePair& p : pairs) {
    std::string rel_a = "a/" + p.id + ".ppm";
    std::string rel_b = "b/" + p.id + ".ppm";
    write_ppm((fs::path(dir) / rel_a).string(), p.a1);
    write_ppm((fs::path(dir) / rel_b).string(), p.a2);
    manifest << p.id << '\t' << rel_a << '\t' << rel_b << '\t' << p.gap << '\n';
  }
}

std::vector<FramePair> load_pair_dataset(const std::string& dir) {
  fs::path manifest_path = fs::path(dir) / "manifest.tsv";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw ParseError("dataset: cannot open " + manifest_path.string());
  std::vector<FramePair> pairs;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string id, rel_a, rel_b, gap_str;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, rel_a, '\t') ||
        !std::getline(ss, rel_b, '\t') || !std::getline(ss, gap_str))
      throw ParseError("dataset: malformed manifest line " + std::to_string(line_no));
    FramePair p;
    p.id = id;
    p.a1 = read_ppm((fs::path(dir) / rel_a).string());
    p.a2 = read_ppm((fs::path(dir) / rel_b).string());
    p.gap = std::stoi(gap_str);
    if (p.gap < 1) throw ParseError("dataset: bad gap on line " + std::to_string(line_no));
    if (!p.a1.same_shape(p.a2))
      throw ParseError("dataset: frame shapes differ on line " + std::to_string(line_no));
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw ParseError("dataset: empty manifest " + manifest_path.string());
  return pairs;
}

}  // namespace siammcvae
